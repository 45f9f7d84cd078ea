//! Finite discrete laws and exhaustive enumeration of finite-depth trees.
//!
//! Used as exact oracles: conditional expectations over a discrete law are
//! finite sums, so supermartingale conditions can be checked node by node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A probability law with finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLaw<T> {
    atoms: Vec<T>,
    probs: Vec<f64>,
}

impl<T> DiscreteLaw<T> {
    /// Probabilities must be nonnegative and sum to one within `1e-9`.
    pub fn new(atoms: Vec<T>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::Param("discrete law needs matching, non-empty atoms and probabilities".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Param("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Param(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { atoms, probs })
    }

    pub fn uniform(atoms: Vec<T>) -> Result<Self> {
        let n = atoms.len().max(1);
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn atoms(&self) -> &[T] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.atoms.iter().zip(self.probs.iter().copied())
    }

    /// Exact expectation of `f`.
    pub fn expect(&self, mut f: impl FnMut(&T) -> f64) -> f64 {
        self.iter().map(|(a, p)| p * f(a)).sum()
    }
}

/// Maximum number of atoms per conditional law in tree enumeration.
pub const MAX_ATOMS: usize = 20;
/// Maximum tree depth.
pub const MAX_DEPTH: usize = 10;
/// Maximum number of internal nodes visited.
pub const MAX_NODES: usize = 2_000_000;

/// Walks every internal node of a finite-depth tree depth first.
///
/// `law(history)` gives the conditional law of the next value; `visit` is
/// called once per internal node with the history and that law. Returns the
/// number of nodes visited.
pub fn for_each_node<T: Clone>(
    depth: usize,
    law: &dyn Fn(&[T]) -> DiscreteLaw<T>,
    visit: &mut dyn FnMut(&[T], &DiscreteLaw<T>) -> Result<()>,
) -> Result<usize> {
    if depth > MAX_DEPTH {
        return Err(Error::Size(format!("tree depth {depth} exceeds {MAX_DEPTH}")));
    }
    let mut history = Vec::with_capacity(depth);
    let mut count = 0usize;
    walk(depth, law, visit, &mut history, &mut count)?;
    Ok(count)
}

fn walk<T: Clone>(
    depth: usize,
    law: &dyn Fn(&[T]) -> DiscreteLaw<T>,
    visit: &mut dyn FnMut(&[T], &DiscreteLaw<T>) -> Result<()>,
    history: &mut Vec<T>,
    count: &mut usize,
) -> Result<()> {
    if history.len() == depth {
        return Ok(());
    }
    *count += 1;
    if *count > MAX_NODES {
        return Err(Error::Size(format!("tree has more than {MAX_NODES} nodes")));
    }
    let l = law(history);
    if l.len() > MAX_ATOMS {
        return Err(Error::Size(format!("conditional law has {} atoms, limit is {MAX_ATOMS}", l.len())));
    }
    visit(history, &l)?;
    for a in l.atoms() {
        history.push(a.clone());
        walk(depth, law, visit, history, count)?;
        history.pop();
    }
    Ok(())
}
