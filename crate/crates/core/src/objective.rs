//! Trainable objectives behind one interface: full marginal likelihood,
//! profiled marginal likelihood, and the conditional marginal likelihood
//! (CLML).
//!
//! The CLML conditions on a random size-`m` subset and scores the rest:
//! `mean over permutations of [LML(all) - LML(first m)]`, which by the chain
//! rule of Gaussians equals the mean of `log p(y_rest | y_subset)`. Subset
//! indices are sorted before evaluation — the value is order-invariant, and
//! sorting keeps the arithmetic bitwise deterministic (and makes `m = N`
//! return exactly zero).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{log_marginal_likelihood, lml_gradient, Dataset};
use crate::kernels::{Hyperparameters, KernelFamily, KernelSpec, NoiseMode};
use crate::numerics::{rng_from_seed, Seed};
use crate::profiled::{profiled_gradient, profiled_total};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Lml,
    ProfiledLml,
    Clml,
}

/// Conditioning-set size, permutation count, and the stream they come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClmlConfig {
    pub m: usize,
    pub permutations: usize,
    pub seed: Seed,
}

impl ClmlConfig {
    /// `m = ceil(0.8 N)`, 10 permutations.
    pub fn defaults(n: usize, seed: Seed) -> Self {
        Self {
            m: (0.8 * n as f64).ceil() as usize,
            permutations: 10,
            seed,
        }
    }
}

/// Coordinates held fixed during optimization (still part of the
/// hyperparameter set, just not packed into the search vector).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedMask {
    pub lengthscale: bool,
    pub signal_var: bool,
    pub noise: bool,
    pub net: bool,
}

#[derive(Debug, Clone)]
pub struct Objective {
    pub kind: ObjectiveKind,
    pub dataset: Dataset,
    pub kernel: KernelSpec,
    pub clml: Option<ClmlConfig>,
    /// Quadratic penalty `-wd/2 ||w||^2` on network weights. Default 0.
    pub weight_decay: f64,
    pub fixed: FixedMask,
}

impl Objective {
    pub fn lml(dataset: Dataset, kernel: KernelSpec) -> Self {
        Self {
            kind: ObjectiveKind::Lml,
            dataset,
            kernel,
            clml: None,
            weight_decay: 0.0,
            fixed: FixedMask::default(),
        }
    }

    pub fn profiled(dataset: Dataset, kernel: KernelSpec) -> Self {
        Self {
            kind: ObjectiveKind::ProfiledLml,
            dataset,
            kernel,
            clml: None,
            weight_decay: 0.0,
            fixed: FixedMask::default(),
        }
    }

    pub fn clml(dataset: Dataset, kernel: KernelSpec, config: ClmlConfig) -> Result<Self> {
        if config.m > dataset.n() {
            return Err(Error::InvalidInput(format!(
                "conditioning size {} exceeds dataset size {}",
                config.m,
                dataset.n()
            )));
        }
        if config.permutations == 0 {
            return Err(Error::InvalidInput("need at least one permutation".into()));
        }
        Ok(Self {
            kind: ObjectiveKind::Clml,
            dataset,
            kernel,
            clml: Some(config),
            weight_decay: 0.0,
            fixed: FixedMask::default(),
        })
    }

    /// Scale-aware starting point: lengthscale at the median pairwise
    /// distance, signal variance at var(y), noise at a tenth of it.
    pub fn default_init(&self, net_seed: Seed) -> Hyperparameters {
        let var = {
            let v = self.dataset.target_variance();
            if v > 0.0 {
                v
            } else {
                1.0
            }
        };
        let mode = match self.kind {
            ObjectiveKind::ProfiledLml => NoiseMode::Ratio,
            _ => NoiseMode::Absolute,
        };
        let log_noise = match mode {
            NoiseMode::Absolute => (0.1 * var).ln(),
            NoiseMode::Ratio => 0.1f64.ln(),
        };
        let mut h = Hyperparameters::rbf(
            self.dataset.median_pairwise_distance().ln(),
            var.ln(),
            log_noise,
            mode,
        );
        if self.kernel.family == KernelFamily::DeepRbf {
            let widths = default_net_widths(self.dataset.dim());
            let spec = crate::net::NetSpec::tanh_mlp(widths).unwrap();
            h.net = Some(crate::net::net_init(&spec, net_seed));
        }
        h
    }

    fn has_signal_coord(&self) -> bool {
        self.kind != ObjectiveKind::ProfiledLml && !self.fixed.signal_var
    }

    fn has_net_coords(&self, h: &Hyperparameters) -> bool {
        self.kernel.family == KernelFamily::DeepRbf && h.net.is_some() && !self.fixed.net
    }

    /// Active coordinates in stable order.
    pub fn coord_names(&self, h: &Hyperparameters) -> Vec<String> {
        let mut names = Vec::new();
        if !self.fixed.lengthscale {
            names.push("log_lengthscale".to_string());
        }
        if self.has_signal_coord() {
            names.push("log_signal_var".to_string());
        }
        if !self.fixed.noise {
            names.push("log_noise".to_string());
        }
        if self.has_net_coords(h) {
            let count = h.net.as_ref().unwrap().flat().len();
            names.extend((0..count).map(|i| format!("net[{i}]")));
        }
        names
    }

    pub fn pack(&self, h: &Hyperparameters) -> Vec<f64> {
        let mut v = Vec::new();
        if !self.fixed.lengthscale {
            v.push(h.log_lengthscale);
        }
        if self.has_signal_coord() {
            v.push(h.log_signal_var);
        }
        if !self.fixed.noise {
            v.push(h.log_noise);
        }
        if self.has_net_coords(h) {
            v.extend_from_slice(h.net.as_ref().unwrap().flat());
        }
        v
    }

    pub fn unpack(&self, v: &[f64], template: &Hyperparameters) -> Result<Hyperparameters> {
        let expected = self.pack(template).len();
        if v.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "Objective::unpack",
                expected,
                got: v.len(),
            });
        }
        let mut h = template.clone();
        let mut at = 0;
        if !self.fixed.lengthscale {
            h.log_lengthscale = v[at];
            at += 1;
        }
        if self.has_signal_coord() {
            h.log_signal_var = v[at];
            at += 1;
        }
        if !self.fixed.noise {
            h.log_noise = v[at];
            at += 1;
        }
        if self.has_net_coords(template) {
            let w = template.net.as_ref().unwrap();
            h.net = Some(crate::net::NetWeights::from_flat(
                w.spec().clone(),
                v[at..].to_vec(),
            )?);
        }
        Ok(h)
    }

    /// Objective value and packed gradient at `h`.
    pub fn eval(&self, h: &Hyperparameters) -> Result<(f64, Vec<f64>)> {
        let (mut value, mut grad) = match self.kind {
            ObjectiveKind::Lml => {
                let b = log_marginal_likelihood(&self.dataset, h, &self.kernel)?;
                let g = lml_gradient(&self.dataset, h, &self.kernel)?;
                (
                    b.total,
                    self.pack_gradient(
                        h,
                        g.d_log_lengthscale,
                        Some(g.d_log_signal_var),
                        g.d_log_noise,
                        g.d_net.as_ref().map(|w| w.flat().to_vec()),
                    ),
                )
            }
            ObjectiveKind::ProfiledLml => {
                let value = profiled_total(&self.dataset, h, &self.kernel)?;
                let g = profiled_gradient(&self.dataset, h, &self.kernel)?;
                (
                    value,
                    self.pack_gradient(
                        h,
                        g.d_log_lengthscale,
                        None,
                        g.d_log_noise,
                        g.d_net.as_ref().map(|w| w.flat().to_vec()),
                    ),
                )
            }
            ObjectiveKind::Clml => self.eval_clml(h)?,
        };

        if self.weight_decay > 0.0 {
            if let Some(w) = h.net.as_ref() {
                let norm_sq: f64 = w.flat().iter().map(|v| v * v).sum();
                value -= 0.5 * self.weight_decay * norm_sq;
                if self.has_net_coords(h) {
                    let net_start = grad.len() - w.flat().len();
                    for (g, wv) in grad[net_start..].iter_mut().zip(w.flat()) {
                        *g -= self.weight_decay * wv;
                    }
                }
            }
        }
        Ok((value, grad))
    }

    fn pack_gradient(
        &self,
        h: &Hyperparameters,
        d_l: f64,
        d_sf2: Option<f64>,
        d_noise: f64,
        d_net: Option<Vec<f64>>,
    ) -> Vec<f64> {
        let mut g = Vec::new();
        if !self.fixed.lengthscale {
            g.push(d_l);
        }
        if self.has_signal_coord() {
            g.push(d_sf2.unwrap_or(0.0));
        }
        if !self.fixed.noise {
            g.push(d_noise);
        }
        if self.has_net_coords(h) {
            match d_net {
                Some(v) => g.extend(v),
                None => g.extend(vec![0.0; h.net.as_ref().unwrap().flat().len()]),
            }
        }
        g
    }

    /// Conditioning subsets (sorted index lists), fixed by the CLML seed.
    pub fn clml_subsets(&self) -> Vec<Vec<usize>> {
        let cfg = self.clml.expect("clml config present");
        let n = self.dataset.n();
        if cfg.m == 0 || cfg.m == n {
            // order never matters in the degenerate cases
            return vec![(0..cfg.m).collect()];
        }
        let mut rng = rng_from_seed(cfg.seed);
        (0..cfg.permutations)
            .map(|_| {
                use rand::seq::SliceRandom;
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                let mut subset: Vec<usize> = idx[..cfg.m].to_vec();
                subset.sort_unstable();
                subset
            })
            .collect()
    }

    fn eval_clml(&self, h: &Hyperparameters) -> Result<(f64, Vec<f64>)> {
        let cfg = self.clml.ok_or_else(|| {
            Error::InvalidInput("clml objective without clml config".into())
        })?;
        let n = self.dataset.n();

        let full = log_marginal_likelihood(&self.dataset, h, &self.kernel)?;
        let gfull = lml_gradient(&self.dataset, h, &self.kernel)?;
        let gfull_packed = self.pack_gradient(
            h,
            gfull.d_log_lengthscale,
            Some(gfull.d_log_signal_var),
            gfull.d_log_noise,
            gfull.d_net.as_ref().map(|w| w.flat().to_vec()),
        );

        if cfg.m == 0 {
            return Ok((full.total, gfull_packed));
        }
        if cfg.m == n {
            return Ok((0.0, vec![0.0; gfull_packed.len()]));
        }

        let subsets = self.clml_subsets();
        let count = subsets.len() as f64;
        let mut value = 0.0;
        let mut grad = vec![0.0; gfull_packed.len()];
        for subset in &subsets {
            let sub = self.dataset.subset(subset)?;
            let b = log_marginal_likelihood(&sub, h, &self.kernel)?;
            let g = lml_gradient(&sub, h, &self.kernel)?;
            let gp = self.pack_gradient(
                h,
                g.d_log_lengthscale,
                Some(g.d_log_signal_var),
                g.d_log_noise,
                g.d_net.as_ref().map(|w| w.flat().to_vec()),
            );
            value += full.total - b.total;
            for (acc, (gf, gs)) in grad.iter_mut().zip(gfull_packed.iter().zip(&gp)) {
                *acc += gf - gs;
            }
        }
        value /= count;
        for g in &mut grad {
            *g /= count;
        }
        Ok((value, grad))
    }
}

/// Free-function form of [`Objective::eval`].
pub fn eval_objective(obj: &Objective, h: &Hyperparameters) -> Result<(f64, Vec<f64>)> {
    obj.eval(h)
}

/// Per-coordinate comparison of the analytic gradient against central
/// finite differences in the packed (log/weight) domain.
#[derive(Debug, Clone)]
pub struct GradientCheck {
    /// `(coordinate name, relative error)`, error scaled by `max(1, |analytic|)`.
    pub per_coord: Vec<(String, f64)>,
    pub max_rel_error: f64,
}

pub fn gradient_check(obj: &Objective, h: &Hyperparameters, step: f64) -> Result<GradientCheck> {
    let (_, grad) = obj.eval(h)?;
    let v0 = obj.pack(h);
    let names = obj.coord_names(h);
    let mut per_coord = Vec::with_capacity(v0.len());
    let mut worst: f64 = 0.0;
    for c in 0..v0.len() {
        let mut vp = v0.clone();
        vp[c] += step;
        let mut vm = v0.clone();
        vm[c] -= step;
        let (fp, _) = obj.eval(&obj.unpack(&vp, h)?)?;
        let (fm, _) = obj.eval(&obj.unpack(&vm, h)?)?;
        let fd = (fp - fm) / (2.0 * step);
        let err = (fd - grad[c]).abs() / grad[c].abs().max(1.0);
        worst = worst.max(err);
        per_coord.push((names[c].clone(), err));
    }
    Ok(GradientCheck {
        per_coord,
        max_rel_error: worst,
    })
}

fn default_net_widths(input_dim: usize) -> Vec<usize> {
    vec![input_dim, 16, 16, 2]
}
