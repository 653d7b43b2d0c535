//! Box-constrained Nelder–Mead with multiple starts.
//!
//! Trial points are projected onto the box before evaluation, so the simplex
//! can slide along a bound without leaving the feasible region.

use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "bound vectors differ in length");
        assert!(
            lower.iter().zip(&upper).all(|(l, u)| l <= u),
            "lower bound above upper bound"
        );
        Bounds { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    /// Largest vertex distance (max norm) from the best vertex at convergence.
    pub xtol: f64,
    /// Objective spread across the simplex at convergence, relative to `1 + |f_best|`.
    pub ftol: f64,
    pub max_iterations: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            xtol: 1e-4,
            ftol: 1e-8,
            max_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn eval<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimize `f` from `x0` with an initial simplex of per-coordinate `steps`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> Minimum {
    let n = x0.len();
    assert_eq!(n, bounds.dim());
    assert_eq!(n, steps.len());

    let mut start = x0.to_vec();
    bounds.project(&mut start);
    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for i in 0..n {
        let mut v = start.clone();
        v[i] += steps[i];
        if v[i] > bounds.upper[i] {
            v[i] = start[i] - steps[i];
        }
        bounds.project(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(&mut f, v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();
    loop {
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let spread = values[worst] - values[best];
        let size = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if size <= opts.xtol && spread <= opts.ftol * (1.0 + values[best].abs()) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect();
            bounds.project(&mut p);
            p
        };

        let reflected = along(REFLECT);
        let f_reflected = eval(&mut f, &reflected);
        if f_reflected < values[best] {
            let expanded = along(EXPAND);
            let f_expanded = eval(&mut f, &expanded);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
            continue;
        }
        if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
            continue;
        }
        let (contracted, f_contracted) = if f_reflected < values[worst] {
            let p = along(CONTRACT * REFLECT);
            let v = eval(&mut f, &p);
            (p, v)
        } else {
            let p = along(-CONTRACT);
            let v = eval(&mut f, &p);
            (p, v)
        };
        if f_contracted < values[worst].min(f_reflected) {
            simplex[worst] = contracted;
            values[worst] = f_contracted;
            continue;
        }
        let anchor = simplex[best].clone();
        for &i in &order[1..] {
            let mut v: Vec<f64> = anchor
                .iter()
                .zip(&simplex[i])
                .map(|(a, x)| a + SHRINK * (x - a))
                .collect();
            bounds.project(&mut v);
            values[i] = eval(&mut f, &v);
            simplex[i] = v;
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal))
        .unwrap();
    Minimum {
        x: simplex[best].clone(),
        f: values[best],
        iterations,
        converged,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStartResult {
    pub best: Minimum,
    pub n_starts: usize,
}

/// Run [`nelder_mead`] from every start, keep the lowest objective (ties go
/// to the smaller coordinate `tie_index`), then polish the winner with a
/// fresh simplex at tight tolerance.
pub fn multi_start<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    starts: &[Vec<f64>],
    steps: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
    tie_index: usize,
) -> MultiStartResult {
    assert!(!starts.is_empty(), "multi_start needs at least one start");
    let mut best: Option<Minimum> = None;
    for s in starts {
        let m = nelder_mead(&mut f, s, steps, bounds, opts);
        best = Some(match best {
            None => m,
            Some(b) => {
                if better(&m, &b, tie_index) {
                    m
                } else {
                    b
                }
            }
        });
    }
    let best = best.unwrap();

    let polish_opts = NelderMeadOptions {
        xtol: 1e-10,
        ftol: 1e-15,
        max_iterations: opts.max_iterations,
    };
    let small: Vec<f64> = steps.iter().map(|s| s * 1e-2).collect();
    let polished = nelder_mead(&mut f, &best.x, &small, bounds, &polish_opts);
    let best = if polished.f <= best.f {
        Minimum {
            converged: best.converged,
            iterations: best.iterations + polished.iterations,
            ..polished
        }
    } else {
        best
    };
    MultiStartResult {
        best,
        n_starts: starts.len(),
    }
}

fn better(candidate: &Minimum, incumbent: &Minimum, tie_index: usize) -> bool {
    let scale = 1.0 + incumbent.f.abs().max(candidate.f.abs());
    if (candidate.f - incumbent.f).abs() <= 1e-12 * scale {
        candidate.x[tie_index] < incumbent.x[tie_index]
    } else {
        candidate.f < incumbent.f
    }
}
