use std::collections::HashSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::basis::MultiIndex;
use super::jet::JetMap;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Term {
    target: usize,
    alpha: Vec<u32>,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct Wire {
    dim: usize,
    degree: usize,
    constant: Vec<f64>,
    terms: Vec<Term>,
}

impl JetMap {
    fn to_wire(&self) -> Wire {
        let basis = self.basis().clone();
        // Storage is already (target, graded-lex) ordered.
        let terms = self
            .nonzero_slots()
            .filter(|&(_, a, _)| a != 0)
            .map(|(target, a, value)| Term {
                target,
                alpha: basis.monomial(a).as_slice().to_vec(),
                value,
            })
            .collect();
        Wire {
            dim: self.dim(),
            degree: self.degree(),
            constant: self.constant(),
            terms,
        }
    }

    fn from_wire(w: Wire) -> Result<Self> {
        if w.dim == 0 || w.degree == 0 {
            return Err(Error::Invalid("dim and degree must be positive".into()));
        }
        if w.constant.len() != w.dim {
            return Err(Error::DimensionMismatch {
                expected: w.dim,
                got: w.constant.len(),
            });
        }
        let mut out = JetMap::zero(w.dim, w.degree);
        out.set_constant(&w.constant);
        let mut seen = HashSet::new();
        for t in w.terms {
            let alpha = MultiIndex::new(t.alpha);
            if alpha.degree() == 0 {
                return Err(Error::Invalid(
                    "terms must have degree >= 1; use \"constant\"".into(),
                ));
            }
            let idx = out.checked_index(t.target, &alpha)?;
            if !seen.insert((t.target, idx)) {
                return Err(Error::Invalid(format!(
                    "duplicate term (target {}, alpha {alpha:?})",
                    t.target
                )));
            }
            out.set_slot(t.target, idx, t.value);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("jet serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Serialize for JetMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_wire().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for JetMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = Wire::deserialize(deserializer)?;
        JetMap::from_wire(wire).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_sorted_terms() {
        let j = JetMap::from_terms(
            2,
            2,
            [(1, vec![0, 2], 3.0), (0, vec![1, 1], 2.0), (0, vec![1, 0], 1.0)],
        )
        .unwrap();
        assert_eq!(
            j.to_json(),
            r#"{"dim":2,"degree":2,"constant":[0.0,0.0],"terms":[{"target":0,"alpha":[1,0],"value":1.0},{"target":0,"alpha":[1,1],"value":2.0},{"target":1,"alpha":[0,2],"value":3.0}]}"#
        );
    }

    #[test]
    fn reads_any_order() {
        let s = r#"{"dim":2,"degree":2,"constant":[0.5,0],"terms":[
            {"target":1,"alpha":[0,2],"value":3.0},
            {"target":0,"alpha":[1,0],"value":1.0}]}"#;
        let j = JetMap::from_json(s).unwrap();
        assert_eq!(j.coeff(1, &[0, 2]), 3.0);
        assert_eq!(j.constant(), vec![0.5, 0.0]);
    }

    #[test]
    fn rejects_bad_terms() {
        for s in [
            r#"{"dim":1,"degree":2,"constant":[0],"terms":[{"target":0,"alpha":[3],"value":1}]}"#,
            r#"{"dim":1,"degree":2,"constant":[0],"terms":[{"target":0,"alpha":[0],"value":1}]}"#,
            r#"{"dim":1,"degree":2,"constant":[0,1],"terms":[]}"#,
            r#"{"dim":1,"degree":2,"constant":[0],"terms":[{"target":0,"alpha":[1],"value":1},{"target":0,"alpha":[1],"value":2}]}"#,
        ] {
            assert!(JetMap::from_json(s).is_err(), "{s}");
        }
    }
}
