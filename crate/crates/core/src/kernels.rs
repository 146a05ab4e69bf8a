//! Kernel functions and kernel-matrix assembly.
//!
//! Every kernel is a scalar amplitude times a unit-amplitude base,
//! `k(x, x') = sf2 * khat(x, x')` with `khat(x, x) = 1`, so the profiled
//! machinery can work on `khat` directly. Positive hyperparameters live in
//! log domain. Noise is either absolute (`sn2 = exp(log_noise)`) or a ratio
//! (`sn2 = exp(log_noise) * sf2`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{net_forward, net_vjp, NetWeights};
use crate::numerics::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Absolute,
    Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Rbf,
    DeepRbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

impl KernelSpec {
    pub fn rbf() -> Self {
        Self {
            family: KernelFamily::Rbf,
        }
    }

    pub fn deep_rbf() -> Self {
        Self {
            family: KernelFamily::DeepRbf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub log_lengthscale: f64,
    pub log_signal_var: f64,
    /// `log sn2` in absolute mode, `log sn2_hat` in ratio mode.
    pub log_noise: f64,
    pub noise_mode: NoiseMode,
    pub net: Option<NetWeights>,
}

impl Hyperparameters {
    pub fn rbf(log_lengthscale: f64, log_signal_var: f64, log_noise: f64, mode: NoiseMode) -> Self {
        Self {
            log_lengthscale,
            log_signal_var,
            log_noise,
            noise_mode: mode,
            net: None,
        }
    }

    pub fn lengthscale(&self) -> f64 {
        self.log_lengthscale.exp()
    }

    pub fn signal_var(&self) -> f64 {
        self.log_signal_var.exp()
    }

    /// Effective noise variance on the diagonal of `K + sn2 I`.
    pub fn noise_var(&self) -> f64 {
        match self.noise_mode {
            NoiseMode::Absolute => self.log_noise.exp(),
            NoiseMode::Ratio => self.log_noise.exp() * self.signal_var(),
        }
    }

    /// Noise in units of the signal variance, `sn2_hat = sn2 / sf2`.
    pub fn noise_ratio(&self) -> f64 {
        match self.noise_mode {
            NoiseMode::Absolute => self.log_noise.exp() / self.signal_var(),
            NoiseMode::Ratio => self.log_noise.exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lengthscale", self.lengthscale()),
            ("signal variance", self.signal_var()),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        // noise may be arbitrarily small but not infinite
        if !self.noise_var().is_finite() {
            return Err(Error::InvalidInput("noise variance overflows".into()));
        }
        Ok(())
    }
}

fn dist2(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "kernel input dimensions",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum())
}

/// Unit-amplitude RBF: `exp(-||x - x'||^2 / (2 l^2))`.
fn khat_rbf(x: &[f64], xp: &[f64], lengthscale: f64) -> Result<f64> {
    let d2 = dist2(x, xp)?;
    Ok((-0.5 * d2 / (lengthscale * lengthscale)).exp())
}

/// `sf2 * exp(-||x - x'||^2 / (2 l^2))` on the raw inputs.
pub fn rbf_eval(x: &[f64], xp: &[f64], h: &Hyperparameters) -> Result<f64> {
    Ok(h.signal_var() * khat_rbf(x, xp, h.lengthscale())?)
}

/// RBF on network-warped inputs, `sf2 * khat(g(x), g(x'))`.
pub fn deep_kernel_eval(x: &[f64], xp: &[f64], h: &Hyperparameters) -> Result<f64> {
    let net = h.net.as_ref().ok_or(Error::MissingNetwork)?;
    let zx = net_forward(net, x)?;
    let zxp = net_forward(net, xp)?;
    Ok(h.signal_var() * khat_rbf(&zx, &zxp, h.lengthscale())?)
}

pub fn kernel_eval(x: &[f64], xp: &[f64], h: &Hyperparameters, spec: &KernelSpec) -> Result<f64> {
    match spec.family {
        KernelFamily::Rbf => rbf_eval(x, xp, h),
        KernelFamily::DeepRbf => deep_kernel_eval(x, xp, h),
    }
}

/// Inputs after the kernel's warp: identity for RBF, `g_w` for the deep kernel.
pub fn warped_inputs(
    xs: &[Vec<f64>],
    h: &Hyperparameters,
    spec: &KernelSpec,
) -> Result<Vec<Vec<f64>>> {
    match spec.family {
        KernelFamily::Rbf => Ok(xs.to_vec()),
        KernelFamily::DeepRbf => {
            let net = h.net.as_ref().ok_or(Error::MissingNetwork)?;
            xs.iter().map(|x| net_forward(net, x)).collect()
        }
    }
}

/// Unit-amplitude kernel matrix `Khat`, diagonal exactly 1.
pub fn khat_matrix(xs: &[Vec<f64>], h: &Hyperparameters, spec: &KernelSpec) -> Result<SymMatrix> {
    let z = warped_inputs(xs, h, spec)?;
    let l = h.lengthscale();
    let mut err = None;
    let m = SymMatrix::from_fn(z.len(), |i, j| {
        if i == j {
            return 1.0;
        }
        match khat_rbf(&z[i], &z[j], l) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(m),
    }
}

/// Kernel matrix `K = sf2 * Khat`, diagonal exactly `sf2`.
pub fn kernel_matrix(xs: &[Vec<f64>], h: &Hyperparameters, spec: &KernelSpec) -> Result<SymMatrix> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("kernel matrix needs N >= 1".into()));
    }
    let sf2 = h.signal_var();
    let khat = khat_matrix(xs, h, spec)?;
    SymMatrix::from_fn(khat.n(), |i, j| {
        if i == j {
            sf2
        } else {
            sf2 * khat.get(i, j)
        }
    })
}

/// Analytic kernel-matrix derivatives for the scalar hyperparameters.
/// Network-weight derivatives go through [`kernel_weight_grad`] instead of
/// materializing one matrix per weight.
#[derive(Debug, Clone)]
pub struct KernelGrads {
    /// `dK/d(log l)`, entrywise `K_ij * ||x_i - x_j||^2 / l^2` (warped inputs).
    pub d_log_lengthscale: SymMatrix,
    /// `dK/d(log sf2) = K`.
    pub d_log_signal_var: SymMatrix,
}

pub fn kernel_matrix_grads(
    xs: &[Vec<f64>],
    h: &Hyperparameters,
    spec: &KernelSpec,
) -> Result<KernelGrads> {
    let z = warped_inputs(xs, h, spec)?;
    let k = kernel_matrix(xs, h, spec)?;
    let l2 = h.lengthscale() * h.lengthscale();
    let mut err = None;
    let d_log_lengthscale = SymMatrix::from_fn(k.n(), |i, j| {
        if i == j {
            return 0.0;
        }
        match dist2(&z[i], &z[j]) {
            Ok(d2) => k.get(i, j) * d2 / l2,
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(KernelGrads {
        d_log_lengthscale,
        d_log_signal_var: k,
    })
}

/// Gradient of `sum_ij upstream_ij * K_ij` with respect to the network
/// weights, backpropagated through the warp. `upstream` must be symmetric
/// (it always is for likelihood gradients).
pub fn kernel_weight_grad(
    xs: &[Vec<f64>],
    h: &Hyperparameters,
    spec: &KernelSpec,
    upstream: &SymMatrix,
) -> Result<NetWeights> {
    if spec.family != KernelFamily::DeepRbf {
        return Err(Error::MissingNetwork);
    }
    let net = h.net.as_ref().ok_or(Error::MissingNetwork)?;
    let n = xs.len();
    if upstream.n() != n {
        return Err(Error::DimensionMismatch {
            context: "kernel_weight_grad upstream",
            expected: n,
            got: upstream.n(),
        });
    }
    let z = warped_inputs(xs, h, spec)?;
    let k = kernel_matrix(xs, h, spec)?;
    let l2 = h.lengthscale() * h.lengthscale();
    let d_out = net.spec().output_dim();

    let mut acc = vec![0.0; net.spec().param_count()];
    for i in 0..n {
        // dL/dz_i = sum_j 2 M_ij K_ij (z_j - z_i) / l^2
        let mut up = vec![0.0; d_out];
        for j in 0..n {
            if j == i {
                continue;
            }
            let c = 2.0 * upstream.get(i, j) * k.get(i, j) / l2;
            for (d, u) in up.iter_mut().enumerate() {
                *u += c * (z[j][d] - z[i][d]);
            }
        }
        let (gw, _gx) = net_vjp(net, &xs[i], &up)?;
        for (a, g) in acc.iter_mut().zip(gw.flat()) {
            *a += g;
        }
    }
    NetWeights::from_flat(net.spec().clone(), acc)
}
