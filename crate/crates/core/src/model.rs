//! A mesh bound to resolved materials and cohesive laws.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::cohesive::{CohesiveError, CohesiveLaw, LawRecord};
use crate::material::{Material, MaterialError, MaterialRecord};
use crate::mesh::Mesh;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("hex {element} uses material {name:?}, which is not defined")]
    UnknownMaterial { element: usize, name: String },
    #[error("cohesive element {element} uses law {name:?}, which is not defined")]
    UnknownLaw { element: usize, name: String },
    #[error("material {name:?}: {source}")]
    Material { name: String, source: MaterialError },
    #[error("law {name:?}: {source}")]
    Law { name: String, source: CohesiveError },
}

#[derive(Debug, Clone)]
pub struct Model {
    pub mesh: Arc<Mesh>,
    pub materials: BTreeMap<String, Material>,
    pub laws: BTreeMap<String, CohesiveLaw>,
}

impl Model {
    /// Binds the materials and laws carried by the mesh itself.
    pub fn from_mesh(mesh: Mesh) -> Result<Self, ModelError> {
        let mut model = Self {
            mesh: Arc::new(Mesh::default()),
            materials: BTreeMap::new(),
            laws: BTreeMap::new(),
        };
        model.add_material_records(mesh.materials.values())?;
        model.add_law_records(mesh.laws.values())?;
        model.mesh = Arc::new(mesh);
        Ok(model)
    }

    pub fn add_material_records<'a>(
        &mut self,
        records: impl IntoIterator<Item = &'a MaterialRecord>,
    ) -> Result<(), ModelError> {
        for rec in records {
            let m = rec.resolve().map_err(|source| ModelError::Material {
                name: rec.name.clone(),
                source,
            })?;
            self.materials.insert(rec.name.clone(), m);
        }
        Ok(())
    }

    pub fn add_law_records<'a>(&mut self, records: impl IntoIterator<Item = &'a LawRecord>) -> Result<(), ModelError> {
        for rec in records {
            rec.law.validate().map_err(|source| ModelError::Law {
                name: rec.name.clone(),
                source,
            })?;
            self.laws.insert(rec.name.clone(), rec.law);
        }
        Ok(())
    }

    pub fn with_material(mut self, name: &str, material: Material) -> Self {
        self.materials.insert(name.to_string(), material);
        self
    }

    pub fn with_law(mut self, name: &str, law: CohesiveLaw) -> Self {
        self.laws.insert(name.to_string(), law);
        self
    }

    /// Every element must resolve to a material or law.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (element, hex) in self.mesh.hexes.iter().enumerate() {
            if !self.materials.contains_key(&hex.material) {
                return Err(ModelError::UnknownMaterial {
                    element,
                    name: hex.material.clone(),
                });
            }
        }
        for (element, coh) in self.mesh.cohesives.iter().enumerate() {
            match self.laws.get(&coh.law) {
                None => {
                    return Err(ModelError::UnknownLaw {
                        element,
                        name: coh.law.clone(),
                    })
                }
                Some(law) => law.validate().map_err(|source| ModelError::Law {
                    name: coh.law.clone(),
                    source,
                })?,
            }
        }
        Ok(())
    }
}
