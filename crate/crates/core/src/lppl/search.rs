//! Nonlinear search over `(tc, m, ω)`: a coarse grid across the qualification
//! bounds followed by Nelder–Mead polishing from the best grid points.

use super::ols::{solve, LinearFit, Scratch};

/// Objective over one window: caches `ln(tc − t)` for the last `tc` seen.
pub(crate) struct Objective<'a> {
    times: &'a [f64],
    y: &'a [f64],
    t_last: f64,
    cached_tc: f64,
    log_dt: Vec<f64>,
    scratch: Scratch,
    pub(crate) evaluations: usize,
}

impl<'a> Objective<'a> {
    pub(crate) fn new(times: &'a [f64], y: &'a [f64]) -> Self {
        let t_last = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Objective {
            times,
            y,
            t_last,
            cached_tc: f64::NAN,
            log_dt: vec![0.0; times.len()],
            scratch: Scratch::new(times.len()),
            evaluations: 0,
        }
    }

    /// Linear solution at `(tc, m, ω)`, or `None` outside the model's domain
    /// (`tc` not after the window, `m ≤ 0`) or for a singular design.
    pub(crate) fn eval(&mut self, tc: f64, m: f64, omega: f64) -> Option<LinearFit> {
        self.evaluations += 1;
        if !(tc > self.t_last) || !(m > 0.0) || !omega.is_finite() || !tc.is_finite() || !m.is_finite() {
            return None;
        }
        if tc != self.cached_tc {
            for (l, &t) in self.log_dt.iter_mut().zip(self.times) {
                *l = (tc - t).ln();
            }
            self.cached_tc = tc;
        }
        solve(&self.log_dt, self.y, m, omega, &mut self.scratch).ok().filter(|fit| fit.sse.is_finite())
    }

    fn sse(&mut self, x: [f64; 3]) -> f64 {
        self.eval(x[0], x[1], x[2]).map_or(f64::INFINITY, |f| f.sse)
    }
}

/// Evenly spaced interior points of `(lo, hi)`: midpoints of `count` equal cells.
pub fn grid_axis(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / count as f64).collect()
}

/// Outcome of one Nelder–Mead run.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Polished {
    pub x: [f64; 3],
    pub sse: f64,
    pub converged: bool,
}

pub(crate) struct NelderMead {
    pub max_iterations: usize,
    /// Relative spread of simplex values considered flat.
    pub f_tol: f64,
    /// Simplex extent, in units of the initial step, considered collapsed.
    pub x_tol: f64,
}

impl NelderMead {
    pub(crate) fn minimize(&self, obj: &mut Objective<'_>, start: [f64; 3], step: [f64; 3]) -> Polished {
        const ALPHA: f64 = 1.0;
        const GAMMA: f64 = 2.0;
        const RHO: f64 = 0.5;
        const SIGMA: f64 = 0.5;

        let mut simplex = [start; 4];
        for i in 0..3 {
            simplex[i + 1][i] += step[i];
        }
        let mut values = simplex.map(|x| obj.sse(x));

        let mut converged = false;
        for _ in 0..self.max_iterations {
            let mut order = [0usize, 1, 2, 3];
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.map(|i| simplex[i]);
            values = order.map(|i| values[i]);

            let (best, worst) = (values[0], values[3]);
            if best.is_finite() && worst.is_finite() {
                let flat = worst - best <= self.f_tol * best.abs() + 1e-300;
                let extent = (1..4)
                    .flat_map(|v| (0..3).map(move |i| (v, i)))
                    .map(|(v, i)| ((simplex[v][i] - simplex[0][i]) / step[i]).abs())
                    .fold(0.0, f64::max);
                if flat && extent <= self.x_tol {
                    converged = true;
                    break;
                }
            }

            let mut centroid = [0.0; 3];
            for v in &simplex[..3] {
                for i in 0..3 {
                    centroid[i] += v[i] / 3.0;
                }
            }
            let along =
                |coef: f64| -> [f64; 3] { std::array::from_fn(|i| centroid[i] + coef * (simplex[3][i] - centroid[i])) };

            let reflected = along(-ALPHA);
            let fr = obj.sse(reflected);
            if fr < values[0] {
                let expanded = along(-GAMMA);
                let fe = obj.sse(expanded);
                if fe < fr {
                    simplex[3] = expanded;
                    values[3] = fe;
                } else {
                    simplex[3] = reflected;
                    values[3] = fr;
                }
                continue;
            }
            if fr < values[2] {
                simplex[3] = reflected;
                values[3] = fr;
                continue;
            }
            let (contracted, fc) = if fr < values[3] {
                let c = along(-RHO);
                (c, obj.sse(c))
            } else {
                let c = along(RHO);
                (c, obj.sse(c))
            };
            if fc < values[3].min(fr) {
                simplex[3] = contracted;
                values[3] = fc;
                continue;
            }
            for v in 1..4 {
                simplex[v] = std::array::from_fn(|i| simplex[0][i] + SIGMA * (simplex[v][i] - simplex[0][i]));
                values[v] = obj.sse(simplex[v]);
            }
        }
        let best = (0..4).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        Polished { x: simplex[best], sse: values[best], converged: converged && values[best].is_finite() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_axis_uses_cell_midpoints() {
        assert_eq!(grid_axis(0.0, 1.0, 4), vec![0.125, 0.375, 0.625, 0.875]);
        let w = grid_axis(2.0, 15.0, 10);
        assert!(w[0] > 2.0 && w[9] < 15.0);
    }

    #[test]
    fn nelder_mead_finds_generating_parameters_on_clean_data() {
        let times: Vec<f64> = (1..=100).map(f64::from).collect();
        let (tc, m, omega) = (110.0, 0.45, 7.0);
        let y: Vec<f64> = times
            .iter()
            .map(|t| {
                let dt: f64 = tc - t;
                3.0 - 0.2 * dt.powf(m) * (1.0 + 0.1 * (omega * dt.ln() + 0.5).cos())
            })
            .collect();
        let mut obj = Objective::new(&times, &y);
        let nm = NelderMead { max_iterations: 2000, f_tol: 1e-12, x_tol: 1e-7 };
        let out = nm.minimize(&mut obj, [108.0, 0.5, 6.5], [2.0, 0.1, 1.0]);
        assert!(out.converged);
        assert!((out.x[0] - tc).abs() < 1e-3, "{:?}", out.x);
        assert!((out.x[1] - m).abs() < 1e-4);
        assert!((out.x[2] - omega).abs() < 1e-3);
    }

    #[test]
    fn objective_rejects_points_outside_domain() {
        let times = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 1.1, 1.3, 1.2, 1.5];
        let mut obj = Objective::new(&times, &y);
        assert!(obj.eval(5.0, 0.5, 6.0).is_none());
        assert!(obj.eval(7.0, 0.0, 6.0).is_none());
        assert!(obj.eval(7.0, 0.5, 6.0).is_some());
    }
}
