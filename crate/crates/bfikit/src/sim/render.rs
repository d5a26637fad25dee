//! End-to-end trace rendering: trajectory, channel, noise, feedback, codec.
//!
//! Per sample the beamformee estimates the noisy channel, takes the top
//! right singular vectors per subcarrier as its steering matrix, rotates
//! each column onto the real-last-row convention, and quantizes the result.
//! The trace stores both the raw report stream and its reconstruction.

use nalgebra::DMatrix;
use ndarray::{s, Array3, Array4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::channel::{synth_channel_in, HandModel};
use super::scene::Scene;
use super::trajectory::{plan_trajectory, TypingPlan};
use super::SimError;
use crate::codec::{compress, decompress, BfiMatrix, Codebook, StreamConfig};
use crate::trace::{DomainKey, PinTrace};

/// Renders one PIN entry into a labeled feedback trace.
///
/// `hand: None` renders the empty-desk control with the same schedule and
/// noise stream, so paired comparisons isolate the hand's effect. The output
/// is fully determined by the scene, plan and hand.
pub fn render_trace(
    domain: DomainKey,
    scene: &Scene,
    plan: &TypingPlan,
    hand: Option<&HandModel>,
    codebook: Codebook,
) -> Result<PinTrace, SimError> {
    let geom = scene.geometry()?;
    let traj = plan_trajectory(plan)?;
    let freqs = scene.subcarrier_freqs();
    let n_tx = geom.router_elements.len();
    let n_rx = geom.phone_antennas.len();
    let config = StreamConfig::new(n_tx, n_rx, scene.n_sub)?;

    let mut noise_rng = ChaCha12Rng::seed_from_u64(noise_seed(scene, plan));
    let t_len = traj.positions.len();
    let mut reports = Vec::with_capacity(t_len);
    let mut matrices = Array4::zeros((t_len, scene.n_sub, n_tx, n_rx));
    let mut noise_sigma = None;

    for (n, &tip) in traj.positions.iter().enumerate() {
        let sample = synth_channel_in(&geom, hand, tip, &freqs)?;
        let mut h = sample.h;
        if scene.snr_db.is_finite() {
            // Noise level is anchored to the static direct-path power, which
            // does not depend on the hand, so it is computed once.
            let sigma = *noise_sigma.get_or_insert_with(|| {
                let direct = &sample.components.as_ref().unwrap().direct;
                let p_ref =
                    direct.iter().map(|z| z.norm_sqr()).sum::<f64>() / direct.len() as f64;
                (p_ref * 10f64.powf(-scene.snr_db / 10.0) / 2.0).sqrt()
            });
            for z in h.iter_mut() {
                let re: f64 = noise_rng.sample(StandardNormal);
                let im: f64 = noise_rng.sample(StandardNormal);
                *z += Complex64::new(re * sigma, im * sigma);
            }
        }

        let steering = feedback_matrix(&h, config)?;
        let mut report = compress(&steering, codebook)?;
        report.timestamp = traj.times[n];
        let decoded = decompress(&report);
        matrices
            .slice_mut(s![n, .., .., ..])
            .assign(decoded.values());
        reports.push(report);
    }

    let trace = PinTrace {
        id: format!("{}-{}-{:016x}", domain, plan_pin(plan), plan.rng_seed),
        config,
        codebook,
        sample_rate: plan.sample_rate,
        domain,
        reports,
        matrices,
        keystrokes: traj.keystroke_samples,
        digits: plan.digits.clone(),
        hand_track: Some(traj.positions.iter().map(|p| [p.x, p.y, p.z]).collect()),
    };
    trace
        .validate()
        .map_err(|e| SimError::BadPlan(e.to_string()))?;
    Ok(trace)
}

fn plan_pin(plan: &TypingPlan) -> String {
    plan.digits.iter().map(|d| (b'0' + d) as char).collect()
}

/// Top right singular vectors of the per-subcarrier channel, columns in
/// descending singular-value order, last row made real non-negative.
fn feedback_matrix(
    h: &Array3<Complex64>,
    config: StreamConfig,
) -> Result<BfiMatrix, SimError> {
    let (n_sub, n_tx, n_rx) = h.dim();
    let mut values = Array3::zeros((n_sub, n_tx, n_rx));
    for k in 0..n_sub {
        // The phone observes H as receive-by-transmit.
        let m = DMatrix::from_fn(n_rx, n_tx, |r, t| h[(k, t, r)]);
        let svd = m.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let mut order: Vec<usize> = (0..v_t.nrows()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap()
        });
        for (col, &row) in order.iter().take(n_rx).enumerate() {
            for t in 0..n_tx {
                values[(k, t, col)] = v_t[(row, t)].conj();
            }
        }
    }
    Ok(BfiMatrix::with_phase_convention(config, values)?)
}

/// One noise stream per (scene, plan) pair.
fn noise_seed(scene: &Scene, plan: &TypingPlan) -> u64 {
    let mut h = 0x6a09_e667_f3bc_c908u64;
    let mut fold = |v: u64| {
        h ^= v
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(h << 6)
            .wrapping_add(h >> 2);
    };
    fold(plan.rng_seed);
    fold(scene.room_seed);
    fold(scene.channel_id as u64);
    fold(scene.reflector_angle_deg.to_bits());
    fold(scene.router_position.to_bits());
    fold(scene.snr_db.to_bits());
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_scene(snr_db: f64) -> (DomainKey, Scene) {
        let key = DomainKey::new(2, 2, 56, 45).unwrap();
        let mut scene = Scene::from_domain(&key, snr_db);
        scene.n_sub = 16; // keep render tests quick
        (key, scene)
    }

    fn plan(seed: u64) -> TypingPlan {
        TypingPlan::new(vec![4, 0, 1, 9, 2, 3], seed)
    }

    #[test]
    fn rendered_trace_has_expected_shape_and_labels() {
        let (key, scene) = quick_scene(f64::INFINITY);
        let trace = render_trace(
            key,
            &scene,
            &plan(7),
            Some(&HandModel::default()),
            Codebook::default(),
        )
        .unwrap();
        assert_eq!(trace.len(), 101);
        assert_eq!(trace.keystrokes, vec![14, 29, 43, 58, 72, 86]);
        assert_eq!(trace.pin_string(), "401923");
        assert_eq!(trace.matrices.dim(), (101, 16, 4, 2));
        assert!(trace.validate().is_ok());
        // Report timestamps follow the sample clock.
        assert!((trace.reports[18].timestamp - 1.0) < 1e-12);
    }

    #[test]
    fn noiseless_render_is_deterministic() {
        let (key, scene) = quick_scene(f64::INFINITY);
        let hand = HandModel::default();
        let a = render_trace(key, &scene, &plan(3), Some(&hand), Codebook::default()).unwrap();
        let b = render_trace(key, &scene, &plan(3), Some(&hand), Codebook::default()).unwrap();
        assert_eq!(a.matrices, b.matrices);
        for (ra, rb) in a.reports.iter().zip(&b.reports) {
            assert_eq!(ra.angles(), rb.angles());
        }
    }

    #[test]
    fn noisy_render_is_seeded_not_frozen() {
        let (key, scene) = quick_scene(25.0);
        let hand = HandModel::default();
        let a = render_trace(key, &scene, &plan(3), Some(&hand), Codebook::default()).unwrap();
        let b = render_trace(key, &scene, &plan(3), Some(&hand), Codebook::default()).unwrap();
        assert_eq!(a.matrices, b.matrices);
        let c = render_trace(key, &scene, &plan(4), Some(&hand), Codebook::default()).unwrap();
        assert_ne!(a.matrices, c.matrices);
    }

    #[test]
    fn typing_hand_leaves_a_mark_on_the_angle_stream() {
        let (key, scene) = quick_scene(f64::INFINITY);
        let p = plan(11);
        let typing = render_trace(key, &scene, &p, Some(&HandModel::default()), Codebook::default())
            .unwrap();
        let control = render_trace(key, &scene, &p, None, Codebook::default()).unwrap();
        let differing = typing
            .reports
            .iter()
            .zip(&control.reports)
            .filter(|(a, b)| a.angles() != b.angles())
            .count();
        // The empty-desk control should disagree on most samples.
        assert!(differing > typing.len() / 2, "only {differing} samples differ");
    }

    #[test]
    fn reconstruction_matches_reports() {
        let (key, scene) = quick_scene(30.0);
        let trace = render_trace(
            key,
            &scene,
            &plan(5),
            Some(&HandModel::default()),
            Codebook::default(),
        )
        .unwrap();
        let decoded = decompress(&trace.reports[50]);
        assert_eq!(
            decoded.values(),
            &trace.matrices.slice(s![50, .., .., ..]).to_owned()
        );
    }
}
