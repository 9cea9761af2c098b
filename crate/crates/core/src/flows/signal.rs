use std::fmt;
use std::sync::Arc;

type VecFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// A time signal `t ↦ s(t) ∈ ℝᵈ` with its (right) derivative.
#[derive(Clone)]
pub enum Signal {
    Constant(Vec<f64>),
    /// `slope · t + offset`.
    Affine { slope: Vec<f64>, offset: Vec<f64> },
    /// Scalar wave rising with `slope` for half a period from
    /// `−slope·period/4`, then falling back. Kinks every half period.
    TriangularWave { period: f64, slope: f64 },
    /// Smooth signal given by closures for the value and its derivative.
    Smooth { dim: usize, value: VecFn, derivative: VecFn },
}

impl fmt::Debug for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Self::Affine { slope, offset } => f
                .debug_struct("Affine")
                .field("slope", slope)
                .field("offset", offset)
                .finish(),
            Self::TriangularWave { period, slope } => f
                .debug_struct("TriangularWave")
                .field("period", period)
                .field("slope", slope)
                .finish(),
            Self::Smooth { dim, .. } => f.debug_struct("Smooth").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

impl Signal {
    pub fn smooth(
        dim: usize,
        value: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        derivative: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self::Smooth {
            dim,
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Constant(c) => c.len(),
            Self::Affine { offset, .. } => offset.len(),
            Self::TriangularWave { .. } => 1,
            Self::Smooth { dim, .. } => *dim,
        }
    }

    pub fn value(&self, t: f64) -> Vec<f64> {
        match self {
            Self::Constant(c) => c.clone(),
            Self::Affine { slope, offset } => slope.iter().zip(offset).map(|(s, o)| s * t + o).collect(),
            Self::TriangularWave { period, slope } => {
                let half = period / 2.0;
                let amp = slope * half;
                let u = t.rem_euclid(*period);
                if u < half {
                    vec![-amp / 2.0 + slope * u]
                } else {
                    vec![amp / 2.0 - slope * (u - half)]
                }
            }
            Self::Smooth { value, .. } => value(t),
        }
    }

    /// Right derivative, so a kink reports the slope of the piece it starts.
    pub fn derivative(&self, t: f64) -> Vec<f64> {
        match self {
            Self::Constant(c) => vec![0.0; c.len()],
            Self::Affine { slope, .. } => slope.clone(),
            Self::TriangularWave { period, slope } => {
                if t.rem_euclid(*period) < period / 2.0 {
                    vec![*slope]
                } else {
                    vec![-slope]
                }
            }
            Self::Smooth { derivative, .. } => derivative(t),
        }
    }

    /// Whether `t` lies within `tol` of a point where the derivative jumps.
    pub fn is_kink(&self, t: f64, tol: f64) -> bool {
        match self {
            Self::TriangularWave { period, .. } => {
                let half = period / 2.0;
                let u = t.rem_euclid(half);
                u.min(half - u) <= tol
            }
            _ => false,
        }
    }

    /// `sup ‖ṡ(t)‖` over `[t0, t1]`. Exact for the piecewise-linear kinds;
    /// for smooth signals the maximum over `samples` grid points, refined by
    /// golden-section search around the best one.
    pub fn lipschitz_constant(&self, t0: f64, t1: f64, samples: usize) -> f64 {
        match self {
            Self::Constant(_) => 0.0,
            Self::Affine { slope, .. } => crate::linalg::norm2(slope),
            Self::TriangularWave { slope, .. } => slope.abs(),
            Self::Smooth { derivative, .. } => sup_norm(|t| derivative(t), t0, t1, samples),
        }
    }
}

/// `sup ‖f(t)‖` over `[t0, t1]`: the best of `samples` grid points, refined
/// by golden-section search on the bracketing cells.
pub fn sup_norm(f: impl Fn(f64) -> Vec<f64>, t0: f64, t1: f64, samples: usize) -> f64 {
    let norm = |t: f64| crate::linalg::norm2(&f(t));
    let samples = samples.max(2);
    let dt = (t1 - t0) / (samples - 1) as f64;
    let (mut best_t, mut best) = (t0, norm(t0));
    for k in 1..samples {
        let t = t0 + k as f64 * dt;
        let v = norm(t);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    let (mut a, mut b) = ((best_t - dt).max(t0), (best_t + dt).min(t1));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if norm(c) > norm(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(norm(0.5 * (a + b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangular_wave_shape() {
        let w = Signal::TriangularWave { period: 4.0, slope: 1.0 };
        assert_eq!(w.value(0.0), vec![-1.0]);
        assert_eq!(w.value(1.0), vec![0.0]);
        assert_eq!(w.value(2.0), vec![1.0]);
        assert_eq!(w.value(3.0), vec![0.0]);
        assert_eq!(w.value(4.0), vec![-1.0]);
        assert_eq!(w.derivative(1.0), vec![1.0]);
        assert_eq!(w.derivative(2.0), vec![-1.0]);
        assert!(w.is_kink(2.0, 1e-12) && w.is_kink(8.0, 1e-12));
        assert!(!w.is_kink(1.0, 1e-12));
    }

    #[test]
    fn smooth_lipschitz_refines_the_grid_maximum() {
        let s = Signal::smooth(1, |t| vec![t.sin()], |t| vec![t.cos()]);
        let l = s.lipschitz_constant(0.5, 7.0, 7);
        assert!((l - 1.0).abs() < 1e-12);
    }
}
