//! Target functionals `T` with their first three derivatives.

use std::fmt;
use std::sync::Arc;

use crate::error::{usage, Result};

type Eval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Which closed forms apply to a functional.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalKind {
    /// `T(y) = y^p`.
    Power(f64),
    /// `T(y) = y ln y`.
    Entropy,
    Custom,
}

/// `T` together with `T'`, `T''`, `T'''` and the floor at which a pilot
/// density estimate is clamped before the derivatives are evaluated.
#[derive(Clone)]
pub struct FunctionalSpec {
    name: String,
    kind: FunctionalKind,
    domain_floor: f64,
    t: [Eval; 4],
}

impl fmt::Debug for FunctionalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionalSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("domain_floor", &self.domain_floor)
            .finish()
    }
}

const DEFAULT_FLOOR: f64 = 1e-3;

impl FunctionalSpec {
    pub fn custom(
        name: impl Into<String>,
        domain_floor: f64,
        t: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d3: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(domain_floor > 0.0 && domain_floor.is_finite()) {
            return usage(format!("domain floor {domain_floor} must be positive"));
        }
        Ok(Self {
            name: name.into(),
            kind: FunctionalKind::Custom,
            domain_floor,
            t: [Arc::new(t), Arc::new(d1), Arc::new(d2), Arc::new(d3)],
        })
    }

    /// `T(y) = y^p`.
    pub fn power(p: f64) -> Result<Self> {
        if !p.is_finite() {
            return usage("power exponent must be finite");
        }
        let mut spec = Self::custom(
            format!("power({p})"),
            DEFAULT_FLOOR,
            move |y| y.powf(p),
            move |y| p * y.powf(p - 1.0),
            move |y| p * (p - 1.0) * y.powf(p - 2.0),
            move |y| p * (p - 1.0) * (p - 2.0) * y.powf(p - 3.0),
        )?;
        spec.kind = FunctionalKind::Power(p);
        Ok(spec)
    }

    pub fn square() -> Self {
        let mut spec = Self::power(2.0).expect("finite exponent");
        spec.name = "square".into();
        spec.t = [Arc::new(|y| y * y), Arc::new(|y| 2.0 * y), Arc::new(|_| 2.0), Arc::new(|_| 0.0)];
        spec
    }

    pub fn cube() -> Self {
        let mut spec = Self::power(3.0).expect("finite exponent");
        spec.name = "cube".into();
        spec.t = [Arc::new(|y| y * y * y), Arc::new(|y| 3.0 * y * y), Arc::new(|y| 6.0 * y), Arc::new(|_| 6.0)];
        spec
    }

    /// `∫f²`, the collision functional behind the order-2 Rényi entropy.
    pub fn renyi2() -> Self {
        let mut spec = Self::square();
        spec.name = "renyi2".into();
        spec
    }

    /// `T(y) = y ln y` (negative Shannon entropy), extended by `T(0) = 0`.
    pub fn entropy(domain_floor: f64) -> Self {
        let mut spec = Self::custom(
            "entropy",
            domain_floor,
            |y| if y == 0.0 { 0.0 } else { y * y.ln() },
            |y| y.ln() + 1.0,
            |y| 1.0 / y,
            |y| -1.0 / (y * y),
        )
        .expect("caller passes a positive floor");
        spec.kind = FunctionalKind::Entropy;
        spec
    }

    /// Parses `square`, `cube`, `entropy`, `renyi2`, `power(p)` or `power:p`.
    pub fn builtin(name: &str) -> Result<Self> {
        let name = name.trim();
        match name {
            "square" => return Ok(Self::square()),
            "cube" => return Ok(Self::cube()),
            "renyi2" => return Ok(Self::renyi2()),
            "entropy" => return Ok(Self::entropy(DEFAULT_FLOOR)),
            _ => {}
        }
        let exponent = name
            .strip_prefix("power(")
            .and_then(|s| s.strip_suffix(')'))
            .or_else(|| name.strip_prefix("power:"));
        match exponent.map(str::parse::<f64>) {
            Some(Ok(p)) => Self::power(p),
            _ => usage(format!("unknown functional {name:?}; expected square, cube, entropy, renyi2 or power(p)")),
        }
    }

    pub fn with_floor(mut self, domain_floor: f64) -> Result<Self> {
        if !(domain_floor > 0.0 && domain_floor.is_finite()) {
            return usage(format!("domain floor {domain_floor} must be positive"));
        }
        self.domain_floor = domain_floor;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    pub fn domain_floor(&self) -> f64 {
        self.domain_floor
    }

    pub fn value(&self, y: f64) -> f64 {
        (self.t[0])(y)
    }

    pub fn first(&self, y: f64) -> f64 {
        (self.t[1])(y)
    }

    pub fn second(&self, y: f64) -> f64 {
        (self.t[2])(y)
    }

    pub fn third(&self, y: f64) -> f64 {
        (self.t[3])(y)
    }
}
