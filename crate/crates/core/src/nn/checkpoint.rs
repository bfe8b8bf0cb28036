//! JSON checkpoints: architecture descriptor, nested-list parameters, seed
//! and training configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::{Params, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub architecture: serde_json::Value,
    pub params: Vec<ParamEntry>,
    pub seed: u64,
    pub training: serde_json::Value,
    /// Model-specific state that is not a trainable tensor (e.g. feature scaling).
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl Checkpoint {
    pub fn capture<P: Params>(
        architecture: serde_json::Value,
        model: &P,
        seed: u64,
        training: serde_json::Value,
    ) -> Self {
        Checkpoint {
            architecture,
            params: model
                .params()
                .into_iter()
                .map(|(name, t)| ParamEntry {
                    name,
                    shape: t.shape().to_vec(),
                    values: t.to_nested(),
                })
                .collect(),
            seed,
            training,
            extra: serde_json::Value::Null,
        }
    }

    /// Copies stored parameters into `model`, which must have been built
    /// from `expected` architecture.
    pub fn restore_into<P: Params>(&self, expected: &serde_json::Value, model: &mut P) -> Result<()> {
        if &self.architecture != expected {
            return Err(Error::ArchitectureMismatch {
                expected: expected.to_string(),
                found: self.architecture.to_string(),
            });
        }
        let mut slots = model.params_mut();
        if slots.len() != self.params.len() {
            return Err(Error::ArchitectureMismatch {
                expected: format!("{} parameter tensors", slots.len()),
                found: format!("{}", self.params.len()),
            });
        }
        for ((name, slot), entry) in slots.iter_mut().zip(&self.params) {
            if *name != entry.name || slot.shape() != entry.shape.as_slice() {
                return Err(Error::ArchitectureMismatch {
                    expected: format!("{name} {:?}", slot.shape()),
                    found: format!("{} {:?}", entry.name, entry.shape),
                });
            }
            **slot = Tensor::from_nested(&entry.shape, &entry.values)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::lstm::LstmParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    #[test]
    fn roundtrip_is_bit_exact() {
        let p = LstmParams::new(5, 3, &mut ChaCha8Rng::seed_from_u64(11));
        let arch = json!({"lstm": [5, 3]});
        let ck = Checkpoint::capture(arch.clone(), &p, 11, json!({}));
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        let mut q = LstmParams::zeros(5, 3);
        back.restore_into(&arch, &mut q).unwrap();
        for ((_, a), (_, b)) in p.params().iter().zip(q.params()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn rejects_other_architecture() {
        let p = LstmParams::zeros(2, 2);
        let ck = Checkpoint::capture(json!({"lstm": [2, 2]}), &p, 0, json!({}));
        let mut q = LstmParams::zeros(2, 2);
        assert!(matches!(
            ck.restore_into(&json!({"lstm": [2, 3]}), &mut q),
            Err(Error::ArchitectureMismatch { .. })
        ));
    }
}
