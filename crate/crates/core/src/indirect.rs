//! Two-step baseline: per-radio-unit TOA and AOA estimation with MUSIC,
//! followed by maximum-likelihood fusion at the control unit.
//!
//! Each radio unit estimates the angle of arrival from the spatial sample
//! covariance (one snapshot per frequency bin) and the time of arrival from
//! a frequency-smoothed covariance of the waveform-equalized, array-combined
//! observation. The control unit fuses the per-unit estimates by minimizing
//! the variance-weighted squared residuals over a position lattice; the
//! common transmit time enters every TOA the same way and is eliminated in
//! closed form by a weighted mean.
//!
//! The per-unit estimates are fused unquantized: with `N_s B_j` bits
//! available per trial, the distortion from quantizing two scalars is
//! negligible next to the estimation error.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::crb::{fim_unquantized, RuLink};
use crate::direct::Estimate;
use crate::error::{Error, Result};
use crate::scenario::{steering_vector, FreqObservation, Position, Scenario, WaveformSpectrum};
use crate::search;

/// Per-radio-unit measurements with their fusion weights.
///
/// Variances must be positive; an infinite variance disables the
/// corresponding residual.
#[derive(Debug, Clone, Copy)]
pub struct RuMeasurement {
    /// Estimate of `tau_j(p) + t0`, seconds.
    pub toa: f64,
    /// Estimate of the bearing, radians.
    pub aoa: f64,
    pub toa_var: f64,
    pub aoa_var: f64,
}

impl RuMeasurement {
    fn validate(&self, index: usize) -> Result<()> {
        if !(self.toa_var > 0.0) || !(self.aoa_var > 0.0) {
            return Err(Error::invalid(format!(
                "radio unit {index}: measurement variances must be positive"
            )));
        }
        if self.toa_var.is_finite() && !self.toa.is_finite() {
            return Err(Error::invalid(format!("radio unit {index}: non-finite TOA")));
        }
        if self.aoa_var.is_finite() && !self.aoa.is_finite() {
            return Err(Error::invalid(format!("radio unit {index}: non-finite AOA")));
        }
        Ok(())
    }

    fn usable(&self) -> bool {
        self.toa_var.is_finite() || self.aoa_var.is_finite()
    }
}

/// Measurements of all radio units, aligned with the scenario order.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub per_ru: Vec<RuMeasurement>,
}

/// Folds an angle onto `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut a = x % two_pi;
    if a <= -std::f64::consts::PI {
        a += two_pi;
    } else if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// AOA estimation by projecting steering vectors on the noise subspace of
/// the spatial sample covariance, one snapshot per frequency bin.
///
/// Returns the grid angle maximizing the pseudo-spectrum together with the
/// full spectrum for diagnostics. The model order is one source.
pub fn music_aoa(
    obs: &FreqObservation,
    spacing: f64,
    wavelength: f64,
    angle_grid: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let m_ant = obs.num_antennas();
    if m_ant < 2 {
        return Err(Error::invalid("AOA estimation needs at least 2 antennas"));
    }
    if obs.num_bins() == 0 {
        return Err(Error::invalid("AOA estimation needs at least one snapshot"));
    }
    if angle_grid.is_empty() {
        return Err(Error::invalid("empty angle grid"));
    }

    let covariance = spatial_covariance(obs);
    let noise_subspace = noise_subspace(&covariance, 1);

    let spectrum: Vec<f64> = angle_grid
        .iter()
        .map(|&phi| {
            let a = steering_vector(phi, m_ant, spacing, wavelength);
            let a = DVector::from_vec(a);
            let rejected = (noise_subspace.adjoint() * &a).norm_squared();
            1.0 / rejected.max(f64::MIN_POSITIVE)
        })
        .collect();

    let best = argmax_first(&spectrum);
    Ok((angle_grid[best], spectrum))
}

/// TOA estimation over frequency: the observation is combined across
/// antennas with the principal eigenvector of the spatial covariance,
/// equalized by the waveform spectrum, and scanned for the delay whose
/// manifold is orthogonal to the noise subspace of a frequency-smoothed
/// covariance (sub-bands of length `N_s / 2`).
///
/// The returned delay estimates `tau_j(p) + t0` jointly; it aliases modulo
/// the observation window.
pub fn music_toa(
    obs: &FreqObservation,
    waveform: &WaveformSpectrum,
    sampling_period: f64,
    delay_grid: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n_s = obs.num_bins();
    if n_s < 2 {
        return Err(Error::invalid("TOA estimation needs at least 2 bins"));
    }
    if waveform.len() != n_s {
        return Err(Error::invalid("waveform length does not match the observation"));
    }
    if delay_grid.is_empty() {
        return Err(Error::invalid("empty delay grid"));
    }
    for s in waveform.coefficients() {
        if s.norm() < 1e-12 {
            return Err(Error::invalid("waveform spectrum has a near-zero bin"));
        }
    }

    // Combine antennas along the dominant spatial direction.
    let combiner = if obs.num_antennas() == 1 {
        DVector::from_element(1, Complex64::new(1.0, 0.0))
    } else {
        principal_eigenvector(&spatial_covariance(obs))
    };
    let equalized: Vec<Complex64> = (0..n_s)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..obs.num_antennas() {
                acc += combiner[m].conj() * obs.samples[(m, k)];
            }
            acc / waveform.coefficients()[k]
        })
        .collect();

    // Frequency smoothing: overlapping sub-bands share the same delay
    // manifold up to a per-band scalar.
    let n_sub = (n_s / 2).max(2);
    let snapshots = n_s - n_sub + 1;
    let mut covariance = DMatrix::zeros(n_sub, n_sub);
    for start in 0..snapshots {
        let y = DVector::from_fn(n_sub, |i, _| equalized[start + i]);
        covariance += &y * y.adjoint();
    }
    covariance /= Complex64::new(snapshots as f64, 0.0);
    let noise_subspace = noise_subspace(&covariance, 1);

    let window = n_s as f64 * sampling_period;
    let spectrum: Vec<f64> = delay_grid
        .iter()
        .map(|&delay| {
            let scale = 1.0 / (n_sub as f64).sqrt();
            let a = DVector::from_fn(n_sub, |m, _| {
                let w = 2.0 * std::f64::consts::PI * m as f64 / window;
                Complex64::from_polar(scale, -w * delay)
            });
            let rejected = (noise_subspace.adjoint() * &a).norm_squared();
            1.0 / rejected.max(f64::MIN_POSITIVE)
        })
        .collect();

    let best = argmax_first(&spectrum);
    Ok((delay_grid[best], spectrum))
}

/// Bearing interval subtended by the prior region as seen from radio unit
/// `j`, widened by `margin` radians on both sides.
///
/// A one-dimensional array cannot distinguish a bearing from its mirror, so
/// the AOA search runs over the bearings that are geometrically possible:
/// for a radio unit outside the region that arc is bounded by the bearings
/// of the region corners.
pub fn bearing_arc_to_region(scn: &Scenario, j: usize, margin: f64) -> Result<(f64, f64)> {
    let ru = scn.radio_units[j].position;
    let reference = crate::scenario::bearing(scn.region.center(), ru)?;
    let mut lo = 0.0_f64;
    let mut hi = 0.0_f64;
    for corner in scn.region.corners() {
        let offset = wrap_angle(crate::scenario::bearing(corner, ru)? - reference);
        lo = lo.min(offset);
        hi = hi.max(offset);
    }
    Ok((reference + lo - margin, reference + hi + margin))
}

/// Fusion weights derived from the single-unit unquantized information
/// matrix evaluated at a reference position (typically the region center)
/// with the nominal channel amplitude.
///
/// Returns `(toa_var, aoa_var)` per radio unit. A unit whose bearing carries
/// no information (single antenna, or broadside-degenerate geometry) gets an
/// infinite AOA variance, disabling that residual.
pub fn measurement_variances_from_bound(
    scn: &Scenario,
    reference: Position,
    transmit_time: f64,
) -> Result<Vec<(f64, f64)>> {
    (0..scn.num_radio_units())
        .map(|j| {
            let link = RuLink::from_scenario(scn, j, transmit_time);
            let amplitude = Complex64::new(scn.radio_units[j].mean_channel_power.sqrt(), 0.0);
            let params = RuLink::params_for(scn, j, reference, amplitude)?;
            let psi = fim_unquantized(&link, &params);
            if let Some(inv) = psi.try_inverse() {
                return Ok((inv[(0, 0)], inv[(1, 1)]));
            }
            // Degenerate bearing block: bound the TOA from the
            // (tau, Re b, Im b) sub-problem and ignore the AOA.
            let reduced = psi.remove_row(1).remove_column(1);
            let inv = reduced
                .try_inverse()
                .ok_or(Error::SingularMatrix { context: "single-unit information" })?;
            Ok((inv[(0, 0)], f64::INFINITY))
        })
        .collect()
}

/// Maximum-likelihood fusion of TOA/AOA measurements over the position
/// lattice.
///
/// For every candidate position the common transmit time is eliminated in
/// closed form, `t0*(p) = sum_j w_j (toa_j - tau_j(p)) / sum_j w_j` with
/// `w_j = 1 / toa_var_j`; the minimized objective is the weighted sum of
/// squared TOA residuals and wrapped AOA residuals. The returned estimate
/// carries the residual value in `objective` (lower is better) and no
/// amplitudes.
pub fn fuse_ml(
    measurements: &MeasurementSet,
    scn: &Scenario,
    grid: &crate::direct::SearchGrid,
) -> Result<Estimate> {
    if measurements.per_ru.len() != scn.num_radio_units() {
        return Err(Error::invalid(format!(
            "got {} measurements for {} radio units",
            measurements.per_ru.len(),
            scn.num_radio_units()
        )));
    }
    for (j, m) in measurements.per_ru.iter().enumerate() {
        m.validate(j)?;
    }
    let usable = measurements.per_ru.iter().filter(|m| m.usable()).count();
    if usable < 2 {
        return Err(Error::InsufficientMeasurements { required: 2, provided: usable });
    }

    let evaluate = |p: Position| {
        let (cost, t0) = fused_cost(measurements, scn, p);
        (-cost, t0)
    };

    let lattice = search::lattice(&scn.region, grid.spacing);
    let (mut best_p, (mut best_score, mut best_t0)) = search::argmax_parallel(&lattice, evaluate)?;

    let mut half_width = grid.spacing;
    for _ in 0..grid.zoom_rounds {
        let spacing = half_width / grid.zoom_factor as f64;
        let local = search::zoom_lattice(best_p, half_width, spacing, &scn.region);
        let (p, (score, t0)) = search::argmax_parallel(&local, evaluate)?;
        if score > best_score {
            best_p = p;
            best_score = score;
            best_t0 = t0;
        }
        half_width = spacing;
    }

    Ok(Estimate {
        position: best_p,
        transmit_time: best_t0,
        amplitudes: Vec::new(),
        objective: -best_score,
    })
}

/// Weighted fused cost at `p` and the eliminating transmit time.
pub fn fused_cost(measurements: &MeasurementSet, scn: &Scenario, p: Position) -> (f64, f64) {
    let n_r = scn.num_radio_units();
    let mut t0_num = 0.0;
    let mut t0_den = 0.0;
    let mut delays = vec![0.0; n_r];
    for j in 0..n_r {
        let m = &measurements.per_ru[j];
        delays[j] = scn.delay_to_ru(j, p);
        if m.toa_var.is_finite() {
            let w = 1.0 / m.toa_var;
            t0_num += w * (m.toa - delays[j]);
            t0_den += w;
        }
    }
    let t0 = if t0_den > 0.0 { t0_num / t0_den } else { 0.0 };

    let mut cost = 0.0;
    for j in 0..n_r {
        let m = &measurements.per_ru[j];
        if m.toa_var.is_finite() {
            let r = m.toa - delays[j] - t0;
            cost += r * r / m.toa_var;
        }
        if m.aoa_var.is_finite() {
            match scn.bearing_from_ru(j, p) {
                Ok(phi) => {
                    let r = wrap_angle(m.aoa - phi);
                    cost += r * r / m.aoa_var;
                }
                // Candidate sits exactly on the radio unit: no bearing there.
                Err(_) => cost = f64::INFINITY,
            }
        }
    }
    (cost, t0)
}

fn spatial_covariance(obs: &FreqObservation) -> DMatrix<Complex64> {
    let m_ant = obs.num_antennas();
    let n_s = obs.num_bins();
    let mut c = DMatrix::zeros(m_ant, m_ant);
    for k in 0..n_s {
        let r = obs.samples.column(k);
        c += &r * r.adjoint();
    }
    c /= Complex64::new(n_s as f64, 0.0);
    c
}

/// Eigenvectors of the `count` smallest eigenvalues of a Hermitian matrix,
/// stacked as columns.
fn noise_subspace(covariance: &DMatrix<Complex64>, signal_order: usize) -> DMatrix<Complex64> {
    let dim = covariance.nrows();
    let hermitian = (covariance + covariance.adjoint()) / Complex64::new(2.0, 0.0);
    let eig = hermitian.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let noise_dim = dim - signal_order.min(dim - 1);
    let mut subspace = DMatrix::zeros(dim, noise_dim);
    for (out, &idx) in order[..noise_dim].iter().enumerate() {
        subspace.set_column(out, &eig.eigenvectors.column(idx));
    }
    subspace
}

fn principal_eigenvector(covariance: &DMatrix<Complex64>) -> DVector<Complex64> {
    let dim = covariance.nrows();
    let hermitian = (covariance + covariance.adjoint()) / Complex64::new(2.0, 0.0);
    let eig = hermitian.symmetric_eigen();
    let mut best = 0;
    for i in 1..dim {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    eig.eigenvectors.column(best).into_owned()
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
