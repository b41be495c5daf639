//! Fisher-information analysis of direct localization with and without
//! fronthaul quantization.
//!
//! For each radio unit the per-link information matrix `Psi_j` is computed
//! over the local parameters `(tau_j, phi_j, Re b_j, Im b_j)`. The quantized
//! variant sums, over every bin, antenna, quadrature component and quantizer
//! cell, the exact Fisher information of a quantized Gaussian sample; the
//! unquantized variant is the classical Gaussian expression. A Schur
//! complement over the nuisance amplitudes then yields the 2x2 equivalent
//! information for the source position, whose inverse trace lower-bounds the
//! squared position error.
//!
//! Quantization is analyzed without dithering: the bound is evaluated for
//! the plain uniform quantizer.

use nalgebra::{DMatrix, Matrix2, Matrix2x4, Matrix4};
use num_complex::Complex64;
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};
use crate::fronthaul::UniformQuantizerSpec;
use crate::scenario::{Position, Scenario};

/// Largest condition number accepted when inverting the amplitude block.
const MAX_Z_CONDITION: f64 = 1e12;

/// Cells with less probability mass than this are skipped: their numerator
/// vanishes faster, so the limit contribution is zero.
const MIN_CELL_PROBABILITY: f64 = 1e-300;

/// Per-radio-unit information matrix over `(tau, phi, Re b, Im b)`.
pub type Fim4 = Matrix4<f64>;

/// Deterministic signal model of one radio unit, the ingredients of the
/// noiseless observation mean and its derivatives.
#[derive(Debug, Clone)]
pub struct RuLink {
    pub spectrum: Vec<Complex64>,
    /// Angular bin frequencies `w_k`.
    pub omegas: Vec<f64>,
    pub num_antennas: usize,
    pub antenna_spacing: f64,
    pub wavelength: f64,
    /// Noise power per complex sample.
    pub noise_power: f64,
    /// Transmit time, treated as known for the bound.
    pub transmit_time: f64,
}

/// Local link parameters of one radio unit.
#[derive(Debug, Clone, Copy)]
pub struct LinkParams {
    pub delay: f64,
    pub bearing: f64,
    pub amplitude: Complex64,
}

impl RuLink {
    pub fn from_scenario(scn: &Scenario, j: usize, transmit_time: f64) -> Self {
        let ru = &scn.radio_units[j];
        Self {
            spectrum: scn.waveform.coefficients().to_vec(),
            omegas: (0..scn.num_samples).map(|k| scn.omega(k)).collect(),
            num_antennas: ru.num_antennas,
            antenna_spacing: scn.antenna_spacing,
            wavelength: scn.wavelength,
            noise_power: ru.noise_power,
            transmit_time,
        }
    }

    /// Link parameters seen from radio unit `j` for a source at `p` with
    /// amplitude `b`.
    pub fn params_for(scn: &Scenario, j: usize, p: Position, b: Complex64) -> Result<LinkParams> {
        Ok(LinkParams {
            delay: scn.delay_to_ru(j, p),
            bearing: scn.bearing_from_ru(j, p)?,
            amplitude: b,
        })
    }

    /// Noiseless mean of the observation at bin `k`, antenna `m` (0-based).
    pub fn mean(&self, params: &LinkParams, k: usize, m: usize) -> Complex64 {
        params.amplitude * self.array_template(params, k, m)
    }

    /// `alpha_m(phi) S(k) exp(-i w_k (tau + t0))`, the mean divided by the
    /// amplitude.
    fn array_template(&self, params: &LinkParams, k: usize, m: usize) -> Complex64 {
        let scale = 1.0 / (self.num_antennas as f64).sqrt();
        let array_phase = -2.0 * std::f64::consts::PI * self.antenna_spacing
            * params.bearing.cos()
            / self.wavelength
            * m as f64;
        let delay_phase = -self.omegas[k] * (params.delay + self.transmit_time);
        self.spectrum[k] * Complex64::from_polar(scale, array_phase + delay_phase)
    }

    /// All eight partial derivatives of the mean: rows are the parameters
    /// `(tau, phi, Re b, Im b)`, columns the real and imaginary components.
    pub fn mean_derivatives(&self, params: &LinkParams, k: usize, m: usize) -> [[f64; 2]; 4] {
        let template = self.array_template(params, k, m);
        let f = params.amplitude * template;
        let d_tau = Complex64::new(0.0, -self.omegas[k]) * f;
        let phi_factor = 2.0 * std::f64::consts::PI * self.antenna_spacing
            * params.bearing.sin()
            * m as f64
            / self.wavelength;
        let d_phi = Complex64::new(0.0, phi_factor) * f;
        let d_b_re = template;
        let d_b_im = Complex64::new(0.0, 1.0) * template;
        [
            [d_tau.re, d_tau.im],
            [d_phi.re, d_phi.im],
            [d_b_re.re, d_b_re.im],
            [d_b_im.re, d_b_im.im],
        ]
    }
}

/// `P(a < X <= b)` for standard Gaussian `X`, stable in both tails.
fn gaussian_interval_prob(a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return 1.0;
    }
    if a >= 0.0 {
        0.5 * (erfc(a / std::f64::consts::SQRT_2) - erfc(b / std::f64::consts::SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / std::f64::consts::SQRT_2) - erfc(-a / std::f64::consts::SQRT_2))
    } else {
        0.5 * (erf(b / std::f64::consts::SQRT_2) - erf(a / std::f64::consts::SQRT_2))
    }
}

/// Probability that one quadrature component with mean `mean` and complex-
/// sample noise power `sigma^2` falls in quantizer cell `l`.
///
/// Each component carries half the complex-sample power, hence the
/// `sigma / sqrt(2)` scaling inside the Gaussian CDF.
pub fn cell_probability(q: &UniformQuantizerSpec, l: usize, mean: f64, sigma: f64) -> f64 {
    let s = sigma / std::f64::consts::SQRT_2;
    let lower = (q.threshold(l - 1) - mean) / s;
    let upper = (q.threshold(l) - mean) / s;
    gaussian_interval_prob(lower, upper)
}

/// Fisher information over `(tau, phi, Re b, Im b)` of one radio unit
/// observing through the uniform quantizer.
pub fn fim_quantized(link: &RuLink, params: &LinkParams, q: &UniformQuantizerSpec) -> Fim4 {
    let sigma_sq = link.noise_power;
    let mut psi = Fim4::zeros();
    for k in 0..link.spectrum.len() {
        for m in 0..link.num_antennas {
            let f = link.mean(params, k, m);
            let derivs = link.mean_derivatives(params, k, m);
            for (component, mean) in [f.re, f.im].into_iter().enumerate() {
                let mut info_scale = 0.0;
                let mut gamma_prev = 0.0; // threshold q_0 = -inf
                for l in 1..=q.levels() {
                    let t = q.threshold(l);
                    let gamma = (-(t - mean).powi(2) / sigma_sq).exp();
                    let p = cell_probability(q, l, mean, sigma_sq.sqrt());
                    if p >= MIN_CELL_PROBABILITY {
                        info_scale += (gamma - gamma_prev).powi(2) / p;
                    }
                    gamma_prev = gamma;
                }
                info_scale /= std::f64::consts::PI * sigma_sq;
                accumulate_outer(&mut psi, &derivs, component, info_scale);
            }
        }
    }
    psi
}

/// Fisher information of the same link with unquantized observations.
pub fn fim_unquantized(link: &RuLink, params: &LinkParams) -> Fim4 {
    let scale = 2.0 / link.noise_power;
    let mut psi = Fim4::zeros();
    for k in 0..link.spectrum.len() {
        for m in 0..link.num_antennas {
            let derivs = link.mean_derivatives(params, k, m);
            for component in 0..2 {
                accumulate_outer(&mut psi, &derivs, component, scale);
            }
        }
    }
    psi
}

fn accumulate_outer(psi: &mut Fim4, derivs: &[[f64; 2]; 4], component: usize, scale: f64) {
    for p in 0..4 {
        for q in 0..4 {
            psi[(p, q)] += scale * derivs[p][component] * derivs[q][component];
        }
    }
}

/// Equivalent 2x2 information for the source position after eliminating the
/// channel amplitudes, together with its building blocks.
#[derive(Debug, Clone)]
pub struct Efim2 {
    /// `J(p) = X - Y Z^-1 Y^T`.
    pub info: Matrix2<f64>,
    pub x: Matrix2<f64>,
    /// 2 x 2N_r position/amplitude coupling.
    pub y: DMatrix<f64>,
    /// 2N_r x 2N_r block-diagonal amplitude information.
    pub z: DMatrix<f64>,
}

/// Assembles the equivalent position information from the per-link matrices.
///
/// The local parameters map to the position through the Jacobian rows
/// `d tau_j / d p = [cos phi, sin phi] / c` and
/// `d phi_j / d p = [-sin phi, cos phi] / d_j`.
pub fn efim(scn: &Scenario, p: Position, psis: &[Fim4]) -> Result<Efim2> {
    let n_r = scn.num_radio_units();
    if psis.len() != n_r {
        return Err(Error::invalid(format!(
            "got {} information matrices for {} radio units",
            psis.len(),
            n_r
        )));
    }

    let mut x = Matrix2::zeros();
    let mut y = DMatrix::zeros(2, 2 * n_r);
    let mut z = DMatrix::zeros(2 * n_r, 2 * n_r);
    let mut z_blocks = Vec::with_capacity(n_r);

    for j in 0..n_r {
        let u = position_jacobian(scn, j, p)?;
        let psi = &psis[j];
        x += u * psi * u.transpose();
        let coupling = u * psi.fixed_view::<4, 2>(0, 2); // U_j Psi_j V^T
        y.view_mut((0, 2 * j), (2, 2)).copy_from(&coupling);
        let amp_block = psi.fixed_view::<2, 2>(2, 2).into_owned();
        z.view_mut((2 * j, 2 * j), (2, 2)).copy_from(&amp_block);
        z_blocks.push(amp_block);
    }

    // Z is block diagonal; its conditioning is read off the 2x2 blocks.
    let mut min_eig = f64::INFINITY;
    let mut max_eig: f64 = 0.0;
    for block in &z_blocks {
        let (lo, hi) = symmetric_2x2_eigenvalues(block);
        min_eig = min_eig.min(lo);
        max_eig = max_eig.max(hi);
    }
    if !(min_eig > 0.0) || max_eig / min_eig > MAX_Z_CONDITION {
        return Err(Error::SingularMatrix { context: "amplitude information block" });
    }

    let mut info = x;
    for (j, block) in z_blocks.iter().enumerate() {
        let inv = block.try_inverse().ok_or(Error::SingularMatrix {
            context: "amplitude information block",
        })?;
        let y_j = y.view((0, 2 * j), (2, 2)).into_owned();
        info -= &y_j * inv * y_j.transpose();
    }

    Ok(Efim2 { info, x, y, z })
}

fn position_jacobian(scn: &Scenario, j: usize, p: Position) -> Result<Matrix2x4<f64>> {
    let d = p.distance_to(&scn.radio_units[j].position);
    if d == 0.0 {
        return Err(Error::CoincidentPoints { x: p.x, y: p.y });
    }
    let phi = scn.bearing_from_ru(j, p)?;
    let c = scn.propagation_speed;
    Ok(Matrix2x4::new(
        phi.cos() / c, -phi.sin() / d, 0.0, 0.0,
        phi.sin() / c, phi.cos() / d, 0.0, 0.0,
    ))
}

fn symmetric_2x2_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let half_trace = (m[(0, 0)] + m[(1, 1)]) / 2.0;
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = (half_trace * half_trace - det).max(0.0).sqrt();
    (half_trace - disc, half_trace + disc)
}

/// Position-error bound: trace of the inverse equivalent information.
pub fn crb_trace(info: &Matrix2<f64>) -> Result<f64> {
    let det = info[(0, 0)] * info[(1, 1)] - info[(0, 1)] * info[(1, 0)];
    let trace = info[(0, 0)] + info[(1, 1)];
    if !(det > 0.0) || !(trace > 0.0) {
        return Err(Error::SingularMatrix { context: "equivalent position information" });
    }
    Ok(trace / det)
}

/// Low-SNR quantization loss factor in `(0, 1]` for a shared quantizer:
/// the ratio of quantized to unquantized Fisher information when the signal
/// is buried in noise.
pub fn quantization_loss(levels: usize, r_max: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("noise scale must be > 0"));
    }
    let q = UniformQuantizerSpec::with_levels(levels, r_max)?;
    let sigma_sq = sigma * sigma;
    let mut sum = 0.0;
    let mut gamma_prev = 0.0;
    for l in 1..=levels {
        let t = q.threshold(l);
        let gamma = (-(t * t) / sigma_sq).exp();
        let p = cell_probability(&q, l, 0.0, sigma);
        if p >= MIN_CELL_PROBABILITY {
            sum += (gamma - gamma_prev).powi(2) / p;
        }
        gamma_prev = gamma;
    }
    Ok(sum / (2.0 * std::f64::consts::PI))
}

/// Ratio of the unquantized to the quantized position bound at a given
/// source position and channel realization, using the same quantizer at
/// every radio unit.
pub fn loss_ratio(
    scn: &Scenario,
    p: Position,
    amplitudes: &[Complex64],
    transmit_time: f64,
    q: &UniformQuantizerSpec,
) -> Result<f64> {
    let mut psis_q = Vec::with_capacity(scn.num_radio_units());
    let mut psis_uq = Vec::with_capacity(scn.num_radio_units());
    for j in 0..scn.num_radio_units() {
        let link = RuLink::from_scenario(scn, j, transmit_time);
        let params = RuLink::params_for(scn, j, p, amplitudes[j])?;
        psis_q.push(fim_quantized(&link, &params, q));
        psis_uq.push(fim_unquantized(&link, &params));
    }
    let crb_q = crb_trace(&efim(scn, p, &psis_q)?.info)?;
    let crb_uq = crb_trace(&efim(scn, p, &psis_uq)?.info)?;
    Ok(crb_uq / crb_q)
}

/// Frobenius distance between the quantized and unquantized per-link
/// information along a schedule of increasing level counts.
///
/// The dynamic range is held at four times the larger of the noise scale
/// and the peak signal amplitude, so growing the level count shrinks the
/// step size toward zero and the distances toward zero.
pub fn convergence_sweep(link: &RuLink, params: &LinkParams, levels: &[usize]) -> Result<Vec<f64>> {
    let reference = fim_unquantized(link, params);
    let mut peak: f64 = 0.0;
    for k in 0..link.spectrum.len() {
        for m in 0..link.num_antennas {
            peak = peak.max(link.mean(params, k, m).norm());
        }
    }
    let r_max = 4.0 * link.noise_power.sqrt().max(peak);
    levels
        .iter()
        .map(|&l| {
            let q = UniformQuantizerSpec::with_levels(l, r_max)?;
            Ok((fim_quantized(link, params, &q) - reference).norm())
        })
        .collect()
}
