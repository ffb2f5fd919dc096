use super::SimError;

/// Smallest admissible lower bound for any morphology parameter.
pub const MIN_LOWER_BOUND: f64 = 1e-6;

/// Bounded body parameters (segment lengths in meters or dimensionless
/// scale factors).
#[derive(Clone, Debug, PartialEq)]
pub struct MorphologyVector {
    params: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

impl MorphologyVector {
    pub fn new(params: Vec<f64>, bounds: Vec<(f64, f64)>) -> Result<Self, SimError> {
        if params.len() != bounds.len() {
            return Err(SimError::DimensionError {
                expected: bounds.len(),
                got: params.len(),
            });
        }
        for &(lo, hi) in &bounds {
            if !(lo >= MIN_LOWER_BOUND && hi >= lo && hi.is_finite()) {
                return Err(SimError::InvalidSpec(format!("bad bounds ({lo}, {hi})")));
            }
        }
        for (index, (&value, &(lower, upper))) in params.iter().zip(&bounds).enumerate() {
            if !(value >= lower && value <= upper) {
                return Err(SimError::BoundsViolation {
                    index,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(MorphologyVector { params, bounds })
    }

    /// Maps a point of the unit cube to raw units, clamping first.
    pub fn from_unit(unit: &[f64], bounds: &[(f64, f64)]) -> Result<Self, SimError> {
        if unit.len() != bounds.len() {
            return Err(SimError::DimensionError {
                expected: bounds.len(),
                got: unit.len(),
            });
        }
        let params = unit
            .iter()
            .zip(bounds)
            .map(|(&u, &(lo, hi))| {
                let u = if u.is_nan() { 0.5 } else { u.clamp(0.0, 1.0) };
                (lo + u * (hi - lo)).clamp(lo, hi)
            })
            .collect();
        Self::new(params, bounds.to_vec())
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Coordinates in the unit cube spanned by the bounds. Degenerate
    /// dimensions (equal bounds) map to 0.5.
    pub fn to_unit(&self) -> Vec<f64> {
        self.params
            .iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
            .collect()
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self, SimError> {
        Self::new(params, self.bounds.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_out_of_bounds() {
        let err = MorphologyVector::new(vec![0.5, 3.0], vec![(0.1, 1.0), (0.1, 2.0)]).unwrap_err();
        assert!(matches!(err, SimError::BoundsViolation { index: 1, .. }));
    }

    #[test]
    fn rejects_zero_lower_bound() {
        assert!(MorphologyVector::new(vec![0.5], vec![(0.0, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn unit_round_trip(u in proptest::collection::vec(0.0f64..=1.0, 1..6)) {
            let bounds: Vec<(f64, f64)> = (0..u.len()).map(|i| (1e-6, 0.5 + i as f64)).collect();
            let xi = MorphologyVector::from_unit(&u, &bounds).unwrap();
            for (a, b) in xi.to_unit().iter().zip(&u) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
