//! Central finite-difference verification of analytic gradients.

/// Result of checking one tensor.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_coord: usize,
}

/// Relative error between an analytic and a numerical derivative.
///
/// Differences below 1e-8 count as zero: central differences at step 1e-5
/// carry cancellation noise of roughly `|loss| * 1e-11`, which dominates
/// whenever the true derivative is itself (near) zero — e.g. convolution
/// biases that a following batch norm cancels exactly.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < 1e-8 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Check `analytic[i]` against the central difference of `eval` at the
/// selected coordinates of a parameter vector accessed through `get`/`set`.
///
/// `eval` must recompute the scalar loss from the current parameter values;
/// `step` is the half-width of the central difference.
pub fn check_coords(
    coords: &[usize],
    analytic: &[f64],
    mut get: impl FnMut(usize) -> f64,
    mut set: impl FnMut(usize, f64),
    mut eval: impl FnMut() -> f64,
    step: f64,
) -> GradCheck {
    let mut max_rel = 0.0f64;
    let mut worst = 0usize;
    for &i in coords {
        let orig = get(i);
        set(i, orig + step);
        let up = eval();
        set(i, orig - step);
        let down = eval();
        set(i, orig);
        let numeric = (up - down) / (2.0 * step);
        let e = rel_err(analytic[i], numeric);
        if e > max_rel {
            max_rel = e;
            worst = i;
        }
    }
    GradCheck { checked: coords.len(), max_rel_err: max_rel, worst_coord: worst }
}

/// Pick up to `n` distinct coordinates of a tensor of length `len`,
/// deterministically from `seed`.
pub fn pick_coords(len: usize, n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut all: Vec<usize> = (0..len).collect();
    let mut rng = crate::rng::stream(seed, "gradcheck-coords", 0);
    all.shuffle(&mut rng);
    all.truncate(n.min(len));
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_checks_out() {
        // f(p) = sum p_i^2, grad = 2p.
        let p = vec![0.3, -1.2, 0.75];
        let analytic: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        let cell = std::cell::RefCell::new(p);
        let report = check_coords(
            &[0, 1, 2],
            &analytic,
            |i| cell.borrow()[i],
            |i, v| cell.borrow_mut()[i] = v,
            || cell.borrow().iter().map(|v| v * v).sum(),
            1e-5,
        );
        assert!(report.max_rel_err < 1e-9, "{report:?}");
    }
}
