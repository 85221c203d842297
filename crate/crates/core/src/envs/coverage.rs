//! Planar state-space coverage on a fixed occupancy grid.

pub const COVERAGE_BINS: usize = 50;
pub const COVERAGE_X0: (f64, f64) = (-20.0, 20.0);
pub const COVERAGE_X1: (f64, f64) = (-10.0, 15.0);

fn bin(v: f64, (lo, hi): (f64, f64)) -> usize {
    let f = ((v - lo) / (hi - lo) * COVERAGE_BINS as f64).floor();
    if f.is_nan() || f < 0.0 {
        0
    } else {
        (f as usize).min(COVERAGE_BINS - 1)
    }
}

/// 50 x 50 occupancy grid over `(x0, x1)`; out-of-range positions land in
/// the nearest edge cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    cells: Vec<bool>,
    occupied: usize,
}

impl Default for CoverageGrid {
    fn default() -> Self {
        Self {
            cells: vec![false; COVERAGE_BINS * COVERAGE_BINS],
            occupied: 0,
        }
    }
}

impl CoverageGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn visit(&mut self, x0: f64, x1: f64) {
        let idx = bin(x0, COVERAGE_X0) * COVERAGE_BINS + bin(x1, COVERAGE_X1);
        if !self.cells[idx] {
            self.cells[idx] = true;
            self.occupied += 1;
        }
    }

    pub fn occupied(&self) -> usize {
        self.occupied
    }

    pub fn fraction(&self) -> f64 {
        self.occupied as f64 / self.cells.len() as f64
    }
}

/// Fraction of grid cells touched by the planar positions `state[0..2]`.
pub fn coverage<S: AsRef<[f64]>>(visited: &[S]) -> f64 {
    let mut grid = CoverageGrid::new();
    for s in visited {
        let s = s.as_ref();
        grid.visit(s[0], s[1]);
    }
    grid.fraction()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_single_visits() {
        assert_eq!(coverage::<Vec<f64>>(&[]), 0.0);
        assert_eq!(coverage(&[vec![0.0, 0.0, 1.0, 1.0]]), 4e-4);
        assert_eq!(coverage(&[vec![0.0, 0.0], vec![0.01, 0.01]]), 4e-4);
    }

    #[test]
    fn every_cell_touched_gives_one() {
        let mut pts = Vec::new();
        for i in 0..COVERAGE_BINS {
            for j in 0..COVERAGE_BINS {
                let x0 = -20.0 + 0.8 * (i as f64 + 0.5);
                let x1 = -10.0 + 0.5 * (j as f64 + 0.5);
                pts.push([x0, x1]);
            }
        }
        assert_eq!(coverage(&pts), 1.0);
    }

    #[test]
    fn far_points_clamp_to_corners() {
        let far = [[-1e9, -1e9], [1e9, 1e9], [-20.0, -10.0], [20.0, 15.0]];
        assert_eq!(coverage(&far), 2.0 / 2500.0);
    }
}
