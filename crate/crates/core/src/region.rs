use std::sync::Arc;

use crate::error::Result;

/// A membership predicate on ℝ^d.
///
/// Truncation sets and recovered sets both implement this, so either can be
/// handed to samplers and mass estimators.
pub trait Region: Send + Sync {
    /// The dimension the region is defined on, or `None` if it accepts any.
    fn dim(&self) -> Option<usize>;

    fn contains(&self, x: &[f64]) -> Result<bool>;
}

impl<T: Region + ?Sized> Region for &T {
    fn dim(&self) -> Option<usize> {
        (**self).dim()
    }
    fn contains(&self, x: &[f64]) -> Result<bool> {
        (**self).contains(x)
    }
}

impl<T: Region + ?Sized> Region for Arc<T> {
    fn dim(&self) -> Option<usize> {
        (**self).dim()
    }
    fn contains(&self, x: &[f64]) -> Result<bool> {
        (**self).contains(x)
    }
}

impl<T: Region + ?Sized> Region for Box<T> {
    fn dim(&self) -> Option<usize> {
        (**self).dim()
    }
    fn contains(&self, x: &[f64]) -> Result<bool> {
        (**self).contains(x)
    }
}

pub(crate) fn check_region_dim<R: Region + ?Sized>(region: &R, d: usize) -> Result<()> {
    match region.dim() {
        Some(rd) => crate::error::check_dim(rd, d),
        None => Ok(()),
    }
}
