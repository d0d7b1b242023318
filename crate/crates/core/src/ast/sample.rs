use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AstNode, NumericOp, OpNode};
use crate::scalar::AtomScalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: AtomScalar + Deserialize<'de>"))]
pub struct TreeShapeConfig<T> {
    #[serde(rename = "MAX_OPS")]
    pub max_ops: usize,
    #[serde(rename = "MAX_BRANCH")]
    pub max_branch: usize,
    #[serde(rename = "MIN_ARITY")]
    pub min_arity: usize,
    #[serde(rename = "MIN_ATOM_VAL")]
    pub min_atom_val: T,
    #[serde(rename = "MAX_ATOM_VAL")]
    pub max_atom_val: T,
    #[serde(rename = "EARLY_TERMINATION_PROBABILITY")]
    pub early_termination_probability: f64,
}

impl<T: AtomScalar> Default for TreeShapeConfig<T> {
    fn default() -> Self {
        TreeShapeConfig {
            max_ops: 8,
            max_branch: 8,
            min_arity: 4,
            min_atom_val: T::one(),
            max_atom_val: T::from_i64(30).expect("30 fits every atom scalar"),
            early_termination_probability: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShapeError {
    #[error("max_ops must be at least 1")]
    NoOps,
    #[error("min_arity {min} must be between 1 and max_branch {max}")]
    Arity { min: usize, max: usize },
    #[error("atom range is empty: [{min}, {max}]")]
    AtomRange { min: String, max: String },
    #[error("early_termination_probability {0} is not in [0, 1]")]
    Probability(f64),
}

impl<T: AtomScalar> TreeShapeConfig<T> {
    pub fn validate(&self) -> Result<(), ShapeError> {
        if self.max_ops < 1 {
            return Err(ShapeError::NoOps);
        }
        if self.min_arity < 1 || self.min_arity > self.max_branch {
            return Err(ShapeError::Arity {
                min: self.min_arity,
                max: self.max_branch,
            });
        }
        if self.min_atom_val > self.max_atom_val {
            return Err(ShapeError::AtomRange {
                min: self.min_atom_val.to_string(),
                max: self.max_atom_val.to_string(),
            });
        }
        let p = self.early_termination_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(ShapeError::Probability(p));
        }
        Ok(())
    }
}

struct Proto {
    op: NumericOp,
    /// `Some(i)` points at another proto node, `None` is a future atom.
    slots: Vec<Option<usize>>,
}

/// Samples a random tree.
///
/// The tree grows from a root operator by repeatedly promoting one random
/// open child slot into a new operator, until `max_ops` operators exist or an
/// early-termination draw succeeds. Remaining slots become uniform atoms.
/// Arity is uniform in `[min_arity, max_branch]`, operators uniform over
/// SUM/MAX/MIN/MED. The rng is consumed in a fixed order, so a seed fully
/// determines the tree.
pub fn sample_ast<T: AtomScalar, R: Rng + ?Sized>(
    shape: &TreeShapeConfig<T>,
    rng: &mut R,
) -> Result<AstNode<T>, ShapeError> {
    shape.validate()?;

    let mut protos: Vec<Proto> = Vec::with_capacity(shape.max_ops);
    let mut frontier: Vec<(usize, usize)> = Vec::new();
    let new_op = |protos: &mut Vec<Proto>, frontier: &mut Vec<(usize, usize)>, rng: &mut R| {
        let op = NumericOp::ALL[rng.gen_range(0..NumericOp::ALL.len())];
        let arity = rng.gen_range(shape.min_arity..=shape.max_branch);
        let idx = protos.len();
        protos.push(Proto {
            op,
            slots: vec![None; arity],
        });
        frontier.extend((0..arity).map(|slot| (idx, slot)));
        idx
    };

    new_op(&mut protos, &mut frontier, rng);
    let p_stop = shape.early_termination_probability;
    while protos.len() < shape.max_ops && !frontier.is_empty() {
        if p_stop > 0.0 && rng.gen_bool(p_stop) {
            break;
        }
        let pick = rng.gen_range(0..frontier.len());
        let (parent, slot) = frontier.swap_remove(pick);
        let child = new_op(&mut protos, &mut frontier, rng);
        protos[parent].slots[slot] = Some(child);
    }

    fn build<T: AtomScalar, R: Rng + ?Sized>(
        protos: &[Proto],
        idx: usize,
        shape: &TreeShapeConfig<T>,
        rng: &mut R,
    ) -> AstNode<T> {
        let p = &protos[idx];
        let children = p
            .slots
            .iter()
            .map(|slot| match slot {
                Some(child) => build(protos, *child, shape, rng),
                None => AstNode::Atom(rng.gen_range(shape.min_atom_val..=shape.max_atom_val)),
            })
            .collect();
        AstNode::Op(OpNode::new(p.op, children))
    }

    let mut root = build(&protos, 0, shape, rng);
    root.assign_post_order_ids();
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_op_when_bounds_force_it() {
        let shape = TreeShapeConfig::<i64> {
            max_ops: 1,
            min_arity: 4,
            max_branch: 4,
            ..Default::default()
        };
        let t = sample_ast(&shape, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(t.count_ops(), 1);
        let root = t.as_op().unwrap();
        assert_eq!(root.children.len(), 4);
        assert_eq!(root.atom_children().count(), 4);
    }

    #[test]
    fn certain_early_termination_gives_one_op() {
        let shape = TreeShapeConfig::<i64> {
            early_termination_probability: 1.0,
            ..Default::default()
        };
        for seed in 0..50 {
            let t = sample_ast(&shape, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(t.count_ops(), 1);
        }
    }

    #[test]
    fn zero_termination_reaches_max_ops() {
        let shape = TreeShapeConfig::<i64>::default();
        for seed in 0..50 {
            let t = sample_ast(&shape, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(t.count_ops(), 8);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let shape = TreeShapeConfig::<i64>::default();
        let a = sample_ast(&shape, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = sample_ast(&shape, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a.to_prefix(), b.to_prefix());
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_shapes_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = TreeShapeConfig::<i64> {
            min_arity: 9,
            ..Default::default()
        };
        assert!(matches!(
            sample_ast(&bad, &mut rng),
            Err(ShapeError::Arity { .. })
        ));
        let bad = TreeShapeConfig::<i64> {
            max_ops: 0,
            ..Default::default()
        };
        assert_eq!(sample_ast(&bad, &mut rng).unwrap_err(), ShapeError::NoOps);
        let bad = TreeShapeConfig::<i64> {
            min_atom_val: 5,
            max_atom_val: 4,
            ..Default::default()
        };
        assert!(matches!(
            sample_ast(&bad, &mut rng),
            Err(ShapeError::AtomRange { .. })
        ));
        let bad = TreeShapeConfig::<i64> {
            early_termination_probability: 1.5,
            ..Default::default()
        };
        assert!(matches!(
            sample_ast(&bad, &mut rng),
            Err(ShapeError::Probability(_))
        ));
    }
}
