//! PDE data: `-Δu - κ² c u = s` in the domain, `∂u/∂ν + iη u = t` on its boundary.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{Rect, Side};
use crate::linalg::C64;

pub type RealField = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type ComplexField = Arc<dyn Fn(f64, f64) -> C64 + Send + Sync>;
/// Boundary data evaluated at a point on the given side of the domain.
pub type ImpedanceField = Arc<dyn Fn(f64, f64, Side) -> C64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("impedance parameter must have nonzero real part, got {0}")]
    ImaginaryEta(C64),
    #[error("wavenumber must be finite and non-negative, got {0}")]
    Kappa(f64),
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub kappa: f64,
    pub eta: C64,
    pub domain: Rect,
    pub coefficient: RealField,
    /// `None` declares `s ≡ 0`, which lets the solver skip the upward pass.
    pub body_load: Option<ComplexField>,
    pub boundary_data: ImpedanceField,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("kappa", &self.kappa)
            .field("eta", &self.eta)
            .field("domain", &self.domain)
            .field("has_body_load", &self.body_load.is_some())
            .finish()
    }
}

impl ProblemSpec {
    /// `c ≡ 1`, `s ≡ 0`, `t ≡ 0`, `η = κ`.
    pub fn new(domain: Rect, kappa: f64) -> Self {
        ProblemSpec {
            kappa,
            eta: C64::new(kappa, 0.0),
            domain,
            coefficient: Arc::new(|_, _| 1.0),
            body_load: None,
            boundary_data: Arc::new(|_, _, _| C64::new(0.0, 0.0)),
        }
    }

    pub fn with_eta(mut self, eta: C64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_coefficient(mut self, c: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.coefficient = Arc::new(c);
        self
    }

    pub fn with_body_load(mut self, s: impl Fn(f64, f64) -> C64 + Send + Sync + 'static) -> Self {
        self.body_load = Some(Arc::new(s));
        self
    }

    pub fn without_body_load(mut self) -> Self {
        self.body_load = None;
        self
    }

    pub fn with_boundary_data(mut self, t: impl Fn(f64, f64, Side) -> C64 + Send + Sync + 'static) -> Self {
        self.boundary_data = Arc::new(t);
        self
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(ProblemError::Kappa(self.kappa));
        }
        if self.eta.re == 0.0 || !self.eta.re.is_finite() || !self.eta.im.is_finite() {
            return Err(ProblemError::ImaginaryEta(self.eta));
        }
        Ok(())
    }

    pub fn body_load_at(&self, x: f64, y: f64) -> C64 {
        self.body_load.as_ref().map_or(C64::new(0.0, 0.0), |s| s(x, y))
    }
}

/// Gaussian bump centred in the unit square: `exp(-8[(x-0.5)² + (y-0.5)²])`.
pub fn gaussian_bump(x: f64, y: f64) -> f64 {
    (-8.0 * ((x - 0.5).powi(2) + (y - 0.5).powi(2))).exp()
}

/// Exact plane wave `u = exp(i(kx x + ky y))` with body load and impedance
/// data derived analytically for a given coefficient.
#[derive(Clone)]
pub struct ManufacturedSolution {
    pub kappa: f64,
    pub eta: C64,
    pub k: [f64; 2],
    pub domain: Rect,
    coefficient: RealField,
    homogeneous: bool,
}

impl ManufacturedSolution {
    /// General plane wave; `s = (|k|² - κ² c) u`.
    pub fn plane_wave(kappa: f64, eta: C64, k: [f64; 2], coefficient: RealField) -> Self {
        ManufacturedSolution {
            kappa,
            eta,
            k,
            domain: Rect::unit_square(),
            coefficient,
            homogeneous: false,
        }
    }

    /// Benchmark problem on the unit square: `u = exp(i2πκx) exp(i2πκy)`,
    /// Gaussian coefficient, `η = κ` unless overridden.
    pub fn gaussian_benchmark(kappa: f64) -> Self {
        let k = 2.0 * PI * kappa;
        Self::plane_wave(kappa, C64::new(kappa, 0.0), [k, k], Arc::new(gaussian_bump))
    }

    /// Free-space wave with `|k| = κ` and `c ≡ 1`, so `s ≡ 0` is exact.
    pub fn homogeneous_wave(kappa: f64, eta: C64, angle: f64) -> Self {
        let mut m = Self::plane_wave(
            kappa,
            eta,
            [kappa * angle.cos(), kappa * angle.sin()],
            Arc::new(|_, _| 1.0),
        );
        m.homogeneous = true;
        m
    }

    /// `u ≡ 1` for `κ = 0`: `s ≡ 0`, `t = iη`.
    pub fn constant(eta: C64) -> Self {
        let mut m = Self::plane_wave(0.0, eta, [0.0, 0.0], Arc::new(|_, _| 0.0));
        m.homogeneous = true;
        m
    }

    pub fn with_eta(mut self, eta: C64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_domain(mut self, domain: Rect) -> Self {
        self.domain = domain;
        self
    }

    pub fn exact(&self, x: f64, y: f64) -> C64 {
        C64::new(0.0, self.k[0] * x + self.k[1] * y).exp()
    }

    pub fn spec(&self) -> ProblemSpec {
        let [kx, ky] = self.k;
        let kappa = self.kappa;
        let eta = self.eta;
        let coefficient = self.coefficient.clone();
        let wave = move |x: f64, y: f64| C64::new(0.0, kx * x + ky * y).exp();
        let mut spec = ProblemSpec::new(self.domain, kappa).with_eta(eta);
        spec.coefficient = coefficient.clone();
        if !self.homogeneous {
            let k2 = kx * kx + ky * ky;
            spec = spec.with_body_load(move |x, y| (k2 - kappa * kappa * coefficient(x, y)) * wave(x, y));
        }
        spec.with_boundary_data(move |x, y, side| {
            let [nx, ny] = side.outward_normal();
            C64::new(0.0, kx * nx + ky * ny) * wave(x, y) + C64::new(0.0, 1.0) * eta * wave(x, y)
        })
    }
}
