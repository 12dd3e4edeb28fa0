//! Differentially-private generator update: clip the whole gradient vector to
//! L2 norm `C`, add `N(0, σ²C²)` noise per component, then take a plain step.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{sgd_step, ParamVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpConfig {
    pub clip_bound: f64,
    pub noise_multiplier: f64,
    pub enabled: bool,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            clip_bound: 1.0,
            noise_multiplier: 1.0,
            enabled: true,
        }
    }
}

impl DpConfig {
    pub fn disabled() -> Self {
        DpConfig {
            enabled: false,
            ..DpConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(self.clip_bound > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "clip bound must be > 0, got {}",
                self.clip_bound
            )));
        }
        if !(self.noise_multiplier >= 0.0) || !self.noise_multiplier.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise multiplier must be finite and >= 0, got {}",
                self.noise_multiplier
            )));
        }
        Ok(())
    }
}

fn ensure_finite(g: &ParamVector) -> Result<()> {
    if let Some((i, v)) = g.values().iter().enumerate().find(|(_, v)| !v.is_finite()) {
        let slot = g
            .layout()
            .iter()
            .find(|s| s.range().contains(&i))
            .map_or("?", |s| s.name.as_str());
        return Err(Error::NonFinite(format!(
            "gradient component {i} (in `{slot}`) is {v}"
        )));
    }
    Ok(())
}

/// Scales `g` by `min(1, C/‖g‖₂)`. `C = +∞` is a valid no-op bound.
pub fn clip_gradient(g: &ParamVector, clip_bound: f64) -> Result<ParamVector> {
    if !(clip_bound > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "clip bound must be > 0, got {clip_bound}"
        )));
    }
    ensure_finite(g)?;
    let norm = g.l2_norm();
    if norm <= clip_bound {
        return Ok(g.clone());
    }
    Ok(g.scaled(clip_bound / norm))
}

/// `g + z`, `z_i ~ N(0, (σ·C)²)` i.i.d. from `rng`. `σ = 0` returns `g` untouched.
pub fn add_noise(
    g: &ParamVector,
    clip_bound: f64,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<ParamVector> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    ensure_finite(g)?;
    if sigma == 0.0 {
        return Ok(g.clone());
    }
    let std = sigma * clip_bound;
    if !std.is_finite() {
        return Err(Error::NonFinite(format!("noise std σ·C = {std}")));
    }
    let values = g
        .values()
        .iter()
        .map(|v| v + std * rng.gaussian())
        .collect();
    g.with_values(values)
}

/// Privatized gradient `clip(g, C) + N(0, σ²C²I)`, or `g` itself when disabled.
pub fn privatize(
    raw_grad: &ParamVector,
    cfg: &DpConfig,
    rng: &mut SeededRng,
) -> Result<ParamVector> {
    if !cfg.enabled {
        return Ok(raw_grad.clone());
    }
    let clipped = clip_gradient(raw_grad, cfg.clip_bound)?;
    add_noise(&clipped, cfg.clip_bound, cfg.noise_multiplier, rng)
}

/// `θ − lr·(clip(g, C) + noise)`; plain `θ − lr·g` when `cfg.enabled` is false.
pub fn dp_gradient_step(
    params: &ParamVector,
    raw_grad: &ParamVector,
    cfg: &DpConfig,
    lr: f64,
    rng: &mut SeededRng,
) -> Result<ParamVector> {
    params.ensure_same_layout(raw_grad)?;
    let g = privatize(raw_grad, cfg, rng)?;
    sgd_step(params, &g, lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn pv(values: &[f64]) -> ParamVector {
        let t = Tensor::new(vec![values.len()], values.to_vec()).unwrap();
        ParamVector::from_tensors([("g", &t)])
    }

    #[test]
    fn clip_examples() {
        assert_eq!(
            clip_gradient(&pv(&[3.0, 4.0]), 5.0).unwrap().values(),
            &[3.0, 4.0]
        );
        let c = clip_gradient(&pv(&[6.0, 8.0]), 5.0).unwrap();
        assert!((c.values()[0] - 3.0).abs() < 1e-12 && (c.values()[1] - 4.0).abs() < 1e-12);
        assert_eq!(
            clip_gradient(&pv(&[0.0; 4]), 0.3).unwrap().values(),
            &[0.0; 4]
        );
    }

    #[test]
    fn clip_rejects_non_finite() {
        let err = clip_gradient(&pv(&[1.0, f64::NAN]), 1.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref m) if m.contains("component 1")));
        assert!(clip_gradient(&pv(&[f64::INFINITY]), 1.0).is_err());
        assert!(clip_gradient(&pv(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn zero_sigma_is_exact_pass_through() {
        let g = pv(&[0.1, -2.0, 3.5]);
        let mut rng = SeededRng::new(1);
        assert_eq!(add_noise(&g, 1.0, 0.0, &mut rng).unwrap(), g);
        assert_eq!(rng.position(), 0);
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let g = pv(&[0.0; 64]);
        let a = add_noise(&g, 0.7, 1.3, &mut SeededRng::new(5)).unwrap();
        let b = add_noise(&g, 0.7, 1.3, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, g);
    }

    #[test]
    fn dp_step_examples() {
        let cfg = DpConfig {
            clip_bound: 1.0,
            noise_multiplier: 0.0,
            enabled: true,
        };
        let out =
            dp_gradient_step(&pv(&[1.0]), &pv(&[10.0]), &cfg, 0.1, &mut SeededRng::new(0)).unwrap();
        assert!((out.values()[0] - 0.9).abs() < 1e-15);

        let theta = pv(&[0.4, -1.2, 2.0]);
        let g = pv(&[3.0, 0.5, -7.0]);
        let plain = sgd_step(&theta, &g, 0.05).unwrap();
        let disabled = dp_gradient_step(
            &theta,
            &g,
            &DpConfig::disabled(),
            0.05,
            &mut SeededRng::new(3),
        )
        .unwrap();
        assert_eq!(plain, disabled);

        let noisy = DpConfig::default();
        let frozen = dp_gradient_step(&theta, &g, &noisy, 0.0, &mut SeededRng::new(3)).unwrap();
        assert_eq!(frozen, theta);
    }

    #[test]
    fn infinite_bound_without_noise_matches_sgd() {
        let cfg = DpConfig {
            clip_bound: f64::INFINITY,
            noise_multiplier: 0.0,
            enabled: true,
        };
        let theta = pv(&[0.4, -1.2, 2.0]);
        let g = pv(&[300.0, 0.5, -7.0]);
        let dp = dp_gradient_step(&theta, &g, &cfg, 0.01, &mut SeededRng::new(0)).unwrap();
        assert_eq!(dp, sgd_step(&theta, &g, 0.01).unwrap());
    }

    #[test]
    fn dp_step_rejects_layout_mismatch() {
        let err = dp_gradient_step(
            &pv(&[1.0]),
            &pv(&[1.0, 2.0]),
            &DpConfig::default(),
            0.1,
            &mut SeededRng::new(0),
        );
        assert!(matches!(err, Err(Error::Layout(_))));
    }

    proptest! {
        #[test]
        fn clipped_norm_bounded(values in prop::collection::vec(-50.0f64..50.0, 1..64), c in 0.01f64..20.0) {
            let g = pv(&values);
            let out = clip_gradient(&g, c).unwrap();
            let n_out = out.l2_norm();
            prop_assert!(n_out <= c + 1e-12);
            if g.l2_norm() >= c {
                prop_assert!((n_out - c).abs() <= 1e-12 * c.max(1.0));
            } else {
                prop_assert_eq!(out, g);
            }
        }

        #[test]
        fn clip_preserves_direction(values in prop::collection::vec(-5.0f64..5.0, 2..32), alpha in 0.1f64..100.0, c in 0.1f64..3.0) {
            let g = pv(&values);
            prop_assume!(g.l2_norm() > 1e-6);
            let out = clip_gradient(&g.scaled(alpha), c).unwrap();
            let (n1, n2) = (g.l2_norm(), out.l2_norm());
            let cos: f64 = g.values().iter().zip(out.values()).map(|(a, b)| a * b).sum::<f64>() / (n1 * n2);
            prop_assert!((cos - 1.0).abs() < 1e-12);
        }
    }
}
