//! Uniform read access to reduced variables along a stored evolution,
//! whichever solver produced it.

use std::borrow::Cow;

use crate::grid::{interpolate, to_reduced, RadialGrid, ReducedState};
use crate::params::ModelParams;
use crate::solver_char::CharTrajectory;
use crate::solver_fd::Trajectory;

pub trait ReducedHistory: Sync {
    fn grid(&self) -> &RadialGrid;
    fn params(&self) -> &ModelParams;
    fn len(&self) -> usize;
    fn time(&self, i: usize) -> f64;
    fn reduced(&self, i: usize) -> Cow<'_, ReducedState>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the snapshot at time `t` (to within `1e-9 max(1, |t|)`);
    /// snapshot times are increasing.
    fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.time(mid) < t - tol {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        (lo < self.len() && (self.time(lo) - t).abs() <= tol).then_some(lo)
    }

    /// `v_+` at radius `r` of snapshot `i`, linearly interpolated.
    fn v_plus_at(&self, i: usize, r: f64) -> Option<f64> {
        interpolate(&self.reduced(i).v_plus, self.grid().h, r)
    }
}

impl ReducedHistory for Trajectory {
    fn grid(&self) -> &RadialGrid {
        &self.grid
    }
    fn params(&self) -> &ModelParams {
        &self.params
    }
    fn len(&self) -> usize {
        self.snapshots.len()
    }
    fn time(&self, i: usize) -> f64 {
        self.snapshots[i].t
    }
    fn reduced(&self, i: usize) -> Cow<'_, ReducedState> {
        Cow::Owned(to_reduced(&self.snapshots[i], &self.grid, &self.params))
    }
}

impl ReducedHistory for CharTrajectory {
    fn grid(&self) -> &RadialGrid {
        &self.grid
    }
    fn params(&self) -> &ModelParams {
        &self.params
    }
    fn len(&self) -> usize {
        self.snapshots.len()
    }
    fn time(&self, i: usize) -> f64 {
        self.snapshots[i].t
    }
    fn reduced(&self, i: usize) -> Cow<'_, ReducedState> {
        Cow::Borrowed(&self.snapshots[i])
    }
}
