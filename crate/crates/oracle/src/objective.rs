//! Smooth matrix objectives with analytic gradients.
//!
//! Gradients follow the convention `d f = Re Tr(G^H dX)` for each block, so
//! `G` is the steepest-ascent direction in the Frobenius metric.

use matmono_core::linalg::{block_diag, c, gram, hermitian_inv, hermitian_inv_sqrt, log_det_pd, CMat};
use matmono_core::{Error, Result};

pub trait Objective: Sync {
    /// Shapes `(rows, cols)` of the matrix blocks.
    fn shapes(&self) -> Vec<(usize, usize)>;

    fn value(&self, xs: &[CMat]) -> Result<f64>;

    fn gradient(&self, xs: &[CMat]) -> Result<Vec<CMat>>;
}

/// `log|I + X^H Pi X|` for a single block.
pub struct LogDet {
    pub pi: CMat,
    pub cols: usize,
}

impl Objective for LogDet {
    fn shapes(&self) -> Vec<(usize, usize)> {
        vec![(self.pi.nrows(), self.cols)]
    }

    fn value(&self, xs: &[CMat]) -> Result<f64> {
        let x = &xs[0];
        let m = CMat::identity(x.ncols(), x.ncols()) + x.adjoint() * &self.pi * x;
        log_det_pd(&m)
    }

    fn gradient(&self, xs: &[CMat]) -> Result<Vec<CMat>> {
        let x = &xs[0];
        let m = CMat::identity(x.ncols(), x.ncols()) + x.adjoint() * &self.pi * x;
        Ok(vec![&self.pi * x * hermitian_inv(&m)? * c(2.0)])
    }
}

/// Uplink sum rate `log|R_n + sum H_k X_k W_k X_k^H H_k^H| - log|R_n|`.
pub struct UplinkSumRate {
    pub channels: Vec<CMat>,
    pub noise_cov: CMat,
    pub weights: Vec<CMat>,
}

impl UplinkSumRate {
    fn received(&self, xs: &[CMat]) -> CMat {
        let mut s = self.noise_cov.clone();
        for ((h, x), w) in self.channels.iter().zip(xs).zip(&self.weights) {
            s += h * x * w * x.adjoint() * h.adjoint();
        }
        s
    }
}

impl Objective for UplinkSumRate {
    fn shapes(&self) -> Vec<(usize, usize)> {
        self.channels
            .iter()
            .zip(&self.weights)
            .map(|(h, w)| (h.ncols(), w.nrows()))
            .collect()
    }

    fn value(&self, xs: &[CMat]) -> Result<f64> {
        Ok(log_det_pd(&self.received(xs))? - log_det_pd(&self.noise_cov)?)
    }

    fn gradient(&self, xs: &[CMat]) -> Result<Vec<CMat>> {
        let s_inv = hermitian_inv(&self.received(xs))?;
        Ok(self
            .channels
            .iter()
            .zip(xs)
            .zip(&self.weights)
            .map(|((h, x), w)| h.adjoint() * &s_inv * h * x * w * c(2.0))
            .collect())
    }
}

/// Sensor-fusion data shared by the two sensor objectives.
///
/// The optimisation variable of block `k` is `Y_k = X_k R_k^{1/2}`, so the
/// power constraints act on `Y_k` directly.
pub struct SensorModel {
    pub cx_inv: CMat,
    /// `H_k^H R_{n_k}^{-1} H_k`
    pub snr: Vec<CMat>,
    /// `R_{x_k}^{-1/2}`
    pub unwhiten: Vec<CMat>,
}

impl SensorModel {
    pub fn new(cx: &CMat, channels: &[CMat], noise_covs: &[CMat], block_covs: &[CMat]) -> Result<Self> {
        if channels.len() != noise_covs.len() || channels.len() != block_covs.len() {
            return Err(Error::Dimension("per-sensor lists differ in length".into()));
        }
        let snr = channels
            .iter()
            .zip(noise_covs)
            .map(|(h, r)| Ok(h.adjoint() * hermitian_inv(r)? * h))
            .collect::<Result<_>>()?;
        let unwhiten = block_covs.iter().map(hermitian_inv_sqrt).collect::<Result<_>>()?;
        Ok(SensorModel { cx_inv: hermitian_inv(cx)?, snr, unwhiten })
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        self.snr
            .iter()
            .zip(&self.unwhiten)
            .map(|(a, u)| (a.nrows(), u.nrows()))
            .collect()
    }

    fn xs(&self, ys: &[CMat]) -> Vec<CMat> {
        ys.iter().zip(&self.unwhiten).map(|(y, u)| y * u).collect()
    }

    /// `C_x^{-1} + blkdiag(X_k^H A_k X_k)`
    fn information(&self, xs: &[CMat]) -> CMat {
        let blocks: Vec<CMat> = xs.iter().zip(&self.snr).map(|(x, a)| x.adjoint() * a * x).collect();
        &self.cx_inv + block_diag(&blocks)
    }

    fn block_offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for u in &self.unwhiten {
            off.push(off.last().unwrap() + u.nrows());
        }
        off
    }

    fn diag_block(m: &CMat, off: &[usize], k: usize) -> CMat {
        let n = off[k + 1] - off[k];
        m.view((off[k], off[k]), (n, n)).into_owned()
    }
}

/// Mutual information `log|C_x^{-1} + blkdiag(.)| - log|C_x^{-1}|`.
pub struct SensorMutualInfo(pub SensorModel);

impl Objective for SensorMutualInfo {
    fn shapes(&self) -> Vec<(usize, usize)> {
        self.0.shapes()
    }

    fn value(&self, ys: &[CMat]) -> Result<f64> {
        let m = &self.0;
        Ok(log_det_pd(&m.information(&m.xs(ys)))? - log_det_pd(&m.cx_inv)?)
    }

    fn gradient(&self, ys: &[CMat]) -> Result<Vec<CMat>> {
        let m = &self.0;
        let xs = m.xs(ys);
        let inv = hermitian_inv(&m.information(&xs))?;
        let off = m.block_offsets();
        Ok((0..xs.len())
            .map(|k| &m.snr[k] * &xs[k] * SensorModel::diag_block(&inv, &off, k) * &m.unwhiten[k] * c(2.0))
            .collect())
    }
}

/// Negative sum MSE `-Tr((C_x^{-1} + blkdiag(.))^{-1})` of the LMMSE fusion.
pub struct SensorNegSumMse(pub SensorModel);

impl Objective for SensorNegSumMse {
    fn shapes(&self) -> Vec<(usize, usize)> {
        self.0.shapes()
    }

    fn value(&self, ys: &[CMat]) -> Result<f64> {
        let m = &self.0;
        Ok(-hermitian_inv(&m.information(&m.xs(ys)))?.trace().re)
    }

    fn gradient(&self, ys: &[CMat]) -> Result<Vec<CMat>> {
        let m = &self.0;
        let xs = m.xs(ys);
        let inv = hermitian_inv(&m.information(&xs))?;
        let sq = gram(&inv);
        let off = m.block_offsets();
        Ok((0..xs.len())
            .map(|k| &m.snr[k] * &xs[k] * SensorModel::diag_block(&sq, &off, k) * &m.unwhiten[k] * c(2.0))
            .collect())
    }
}

/// Largest relative error between the analytic directional derivative and a
/// central difference, over one pseudo-random direction per block.
pub fn gradient_check(obj: &dyn Objective, xs: &[CMat], direction: &[CMat]) -> Result<f64> {
    let g = obj.gradient(xs)?;
    let scale = xs
        .iter()
        .map(matmono_core::linalg::frobenius)
        .fold(1.0, f64::max);
    let h = 1e-5 * scale;
    let analytic: f64 = g
        .iter()
        .zip(direction)
        .map(|(g, d)| (g.adjoint() * d).trace().re)
        .sum();
    let shift = |s: f64| -> Vec<CMat> { xs.iter().zip(direction).map(|(x, d)| x + d * c(s)).collect() };
    let fd = (obj.value(&shift(h))? - obj.value(&shift(-h))?) / (2.0 * h);
    Ok((analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8))
}
