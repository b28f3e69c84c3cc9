//! Bagged CART forest with mean-decrease-in-impurity importance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::{Family, StatOptions};
use crate::error::{param, Result};
use crate::rng::{Role, Streams};
use crate::tree::{Impurity, Tree, TreeParams};

/// Per-column importance averaged over `opts.trees` bootstrap trees. Tree
/// `t` draws from the `t` child of `streams`, so results do not depend on
/// thread scheduling.
pub fn importance(x: &DMatrix<f64>, y: &DVector<f64>, family: Family, opts: &StatOptions, streams: &Streams) -> Result<Vec<f64>> {
    let (n, m) = x.shape();
    if y.len() != n {
        return param("outcome length must match the number of rows");
    }
    if opts.trees == 0 {
        return param("forest needs at least one tree");
    }
    let params = TreeParams {
        impurity: match family {
            Family::Gaussian => Impurity::Variance,
            Family::Binomial => Impurity::Gini,
        },
        max_depth: None,
        min_leaf: opts.min_leaf,
        mtry: Some(opts.mtry.unwrap_or(((m as f64).sqrt().floor() as usize).max(1))),
    };
    let ys = y.as_slice();
    let total = (0..opts.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = streams.child(t as u64).rng(Role::Statistics);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            Tree::fit(x, ys, rows, params, &mut rng).1
        })
        .reduce(
            || vec![0.0; m],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(u, v)| *u += v);
                a
            },
        );
    Ok(total.into_iter().map(|v| v / opts.trees as f64).collect())
}
