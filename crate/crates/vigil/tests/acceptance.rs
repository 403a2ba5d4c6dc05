//! Acceptance gate: one test per release criterion, each printing a PASS
//! line with the measured numbers. Run with `--nocapture` to see them.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use vigil::alerting::{crc16, decode_alert, encode_alert, quantize_score, AnomalyAlert};
use vigil::anomaly::{AnomalyCode, AnomalyTemplate, FeatureVector, TemplateMatcher, FEATURE_DIM};
use vigil::appearance::Descriptor;
use vigil::appearance::DESCRIPTOR_DIM;
use vigil::association::{assign, AssociationConfig, GatedCostMatrix, Tracker};
use vigil::evaluation::{frame_auc, EvalRecord, TimingModel};
use vigil::geometry::{nms, BoundingBox, Detection};
use vigil::ingestion::{generate_scenario, parse_scenario};
use vigil::motion::{KalmanFilter, MotionConfig, StateMatrix, StateVector, TrackState};
use vigil::pipeline::{run_pipeline, PipelineConfig};

// --- 1. optimal assignment -------------------------------------------------

#[test]
fn assignment_matches_exhaustive_search() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..1000 {
        let rows = rng.gen_range(1..=5);
        let cols = rng.gen_range(1..=5);
        let entries: Vec<Option<f64>> = (0..rows * cols)
            .map(|_| {
                // Quarter-integer costs force plenty of exact cost ties, so
                // the lexicographic tie-break is genuinely exercised.
                rng.gen_bool(0.75)
                    .then(|| rng.gen_range(0..16) as f64 * 0.25)
            })
            .collect();
        let m = GatedCostMatrix::new(rows, cols, entries);
        let got = assign(&m);
        let want = brute_force_assign(&m);
        assert_eq!(got, want, "case {case}: {m:?}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("PASS assignment == exhaustive optimum on 1000 random gated matrices ({elapsed:?})");
}

// --- 2. Kalman update ------------------------------------------------------

#[test]
fn kalman_update_agrees_with_gaussian_conditioning() {
    let kf = KalmanFilter::new(MotionConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mut state = TrackState {
            mean: StateVector::zeros(),
            covariance: StateMatrix::zeros(),
        };
        state.mean[0] = rng.gen_range(0.0..640.0);
        state.mean[1] = rng.gen_range(0.0..480.0);
        state.mean[2] = rng.gen_range(0.2..1.0);
        state.mean[3] = rng.gen_range(20.0..80.0);
        for i in 4..8 {
            state.mean[i] = rng.gen_range(-5.0..5.0);
        }
        // Random well-conditioned covariance: A Aᵀ plus a diagonal bump.
        let mut a = [[0.0f64; 8]; 8];
        for row in &mut a {
            for x in row.iter_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        for i in 0..8 {
            for j in 0..8 {
                let dot: f64 = (0..8).map(|k| a[i][k] * a[j][k]).sum();
                state.covariance[(i, j)] = dot + if i == j { 0.5 } else { 0.0 };
            }
        }
        let noise = [
            rng.gen_range(0.05..5.0),
            rng.gen_range(0.05..5.0),
            rng.gen_range(0.001..0.1),
            rng.gen_range(0.05..5.0),
        ];
        let z = [
            state.mean[0] + rng.gen_range(-10.0..10.0),
            state.mean[1] + rng.gen_range(-10.0..10.0),
            (state.mean[2] + rng.gen_range(-0.2..0.2)).max(0.05),
            (state.mean[3] + rng.gen_range(-10.0..10.0)).max(5.0),
        ];
        let obs = vigil::geometry::Observation {
            u: z[0],
            v: z[1],
            gamma: z[2],
            h: z[3],
        };
        let noise_matrix =
            nalgebra::Matrix4::from_diagonal(&nalgebra::Vector4::from_row_slice(&noise));
        let got = kf.update_with_noise(&state, &obs, &noise_matrix).unwrap();
        let (mean, cov) = conditioning_update(&state, z, noise);

        for i in 0..8 {
            let rel = (got.mean[i] - mean[i]).abs() / (1.0 + mean[i].abs());
            worst = worst.max(rel);
            assert!(rel <= 1e-9, "mean[{i}]: {} vs {}", got.mean[i], mean[i]);
            for j in 0..8 {
                let rel = (got.covariance[(i, j)] - cov[(i, j)]).abs() / (1.0 + cov[(i, j)].abs());
                worst = worst.max(rel);
                assert!(rel <= 1e-9, "cov[{i},{j}]");
            }
        }
    }
    println!("PASS measurement update == joint-Gaussian conditioning, 1000 cases (worst rel err {worst:.2e})");
}

// --- 3. non-maximum suppression ---------------------------------------------

#[test]
fn nms_matches_quadratic_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let n = rng.gen_range(0..=10);
        let dets: Vec<Detection> = (0..n)
            .map(|_| {
                let bbox = BoundingBox::new(
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(5.0..40.0),
                    rng.gen_range(5.0..40.0),
                )
                .unwrap();
                // Coarse confidences so exact ties happen regularly.
                let confidence = rng.gen_range(0..=20) as f64 / 20.0;
                Detection::new(0, bbox, confidence, None).unwrap()
            })
            .collect();
        let overlap = rng.gen_range(0..=10) as f64 / 10.0;
        let got = nms(&dets, overlap);
        let want = brute_force_nms(&dets, overlap);
        let key = |d: &Detection| (d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.confidence);
        assert_eq!(
            got.iter().map(key).collect::<Vec<_>>(),
            want.iter().map(key).collect::<Vec<_>>(),
            "case {case} with overlap {overlap}"
        );
    }
    println!("PASS greedy suppression == quadratic reference on 1000 random box sets");
}

// --- 4. frame-level AUC ------------------------------------------------------

#[test]
fn auc_is_exact_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let n = rng.gen_range(2..=20);
        let (scores, labels) = loop {
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=4) as f64 * 0.25).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
                break (scores, labels);
            }
        };
        let rec = EvalRecord::new(scores.clone(), labels.clone()).unwrap();
        let got = frame_auc(&rec).unwrap();
        let want = pair_count_auc(&scores, &labels);
        assert_eq!(
            got.to_bits(),
            want.to_bits(),
            "scores {scores:?} labels {labels:?}"
        );
    }

    // Perfect separation scores exactly 1; constant scores exactly 1/2.
    let perfect =
        EvalRecord::new(vec![0.9, 0.8, 0.1, 0.2], vec![true, true, false, false]).unwrap();
    assert_eq!(frame_auc(&perfect).unwrap(), 1.0);
    let flat = EvalRecord::new(vec![0.5; 6], vec![true, false, true, false, false, true]).unwrap();
    assert_eq!(frame_auc(&flat).unwrap(), 0.5);
    println!("PASS rank AUC bitwise-equal to pair counting on 1000 random records");
}

// --- 5. latency model ---------------------------------------------------------

#[test]
fn latency_model_reproduces_reference_points() {
    let m = TimingModel::default();
    let p8 = m.predict(8);
    assert_eq!(p8.tau_ms, 400.0);
    assert_eq!(p8.fps, 2.5);
    let p5 = m.predict(5);
    assert_eq!(p5.tau_ms, 286.0);
    assert!((p5.fps - 3.4965).abs() < 1e-3);
    let p2 = m.predict(2);
    assert_eq!(p2.tau_ms, 172.0);
    assert!((p2.fps - 5.8140).abs() < 1e-3);
    // Exactly linear in the detection count for integer loads.
    for d in 0..200u64 {
        assert_eq!(m.predict(d).tau_ms, 96.0 + 38.0 * d as f64);
    }
    println!("PASS latency model hits 400ms/2.5fps at 8 detections, 286ms at 5, 172ms at 2");
}

// --- 6. appearance weight vs identity swaps -----------------------------------

/// Identity vector plus a little per-detection noise, renormalized.
fn noisy_descriptor(rng: &mut ChaCha8Rng, base: usize) -> Descriptor {
    let mut v = [0.0f64; DESCRIPTOR_DIM];
    v[base] = 1.0;
    for x in &mut v {
        *x += 0.02 * rng.gen_range(-1.0..1.0);
    }
    Descriptor::from_unnormalized(&v).unwrap()
}

fn crossing_detection(rng: &mut ChaCha8Rng, t: u64, x: f64, base: usize) -> Detection {
    let u = x + 0.3 * rng.gen_range(-1.0..1.0);
    let v = 240.0 + 0.3 * rng.gen_range(-1.0..1.0);
    let bbox = BoundingBox::new(u - 8.0, v - 20.0, 16.0, 40.0).unwrap();
    Detection::new(t, bbox, 0.9, Some(noisy_descriptor(rng, base))).unwrap()
}

/// Two targets approach head-on, disappear behind an occluder for a few
/// frames, and bounce back the way they came. Straight-line prediction
/// swaps them; appearance should not.
fn crossing_trial(motion_weight: f64, max_cos_distance: f64, seed: u64) -> (bool, bool) {
    let cfg = AssociationConfig {
        motion_weight,
        max_cos_distance,
        ..AssociationConfig::default()
    };
    let mut tracker = Tracker::new(cfg, KalmanFilter::new(MotionConfig::default()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut id_a_start = None;
    let mut id_b_start = None;
    let mut id_a_end = None;
    let mut id_b_end = None;
    for t in 0..=50u64 {
        if (25..=27).contains(&t) {
            tracker.step(t, &[]).unwrap();
            continue;
        }
        let (xa, xb) = if t <= 24 {
            (270.0 + 2.0 * t as f64, 370.0 - 2.0 * t as f64)
        } else {
            (318.0 - 2.0 * (t - 27) as f64, 322.0 + 2.0 * (t - 27) as f64)
        };
        let dets = vec![
            crossing_detection(&mut rng, t, xa, 0),
            crossing_detection(&mut rng, t, xb, 1),
        ];
        let result = tracker.step(t, &dets).unwrap();
        let id_of = |det: usize| {
            result
                .matches
                .iter()
                .find(|&&(_, dj)| dj == det)
                .map(|&(id, _)| id)
        };
        if t == 20 {
            id_a_start = id_of(0);
            id_b_start = id_of(1);
        }
        if t == 50 {
            id_a_end = id_of(0);
            id_b_end = id_of(1);
        }
    }
    let (a0, b0) = (id_a_start.unwrap(), id_b_start.unwrap());
    let swapped = id_a_end == Some(b0) && id_b_end == Some(a0);
    let persisted = id_a_end == Some(a0) && id_b_end == Some(b0);
    (swapped, persisted)
}

#[test]
fn appearance_weight_controls_identity_swaps() {
    let mut swaps_with_appearance = 0;
    let mut persisted_all = true;
    for seed in 0..100 {
        let (swapped, persisted) = crossing_trial(0.0, 0.9, seed);
        swaps_with_appearance += swapped as u32;
        persisted_all &= persisted;
    }
    assert_eq!(swaps_with_appearance, 0, "appearance must hold identities");
    assert!(persisted_all, "both ids must survive the occlusion");

    let mut swaps_motion_only = 0;
    for seed in 0..100 {
        let (swapped, _) = crossing_trial(1.0, 2.0, seed);
        swaps_motion_only += swapped as u32;
    }
    assert!(
        swaps_motion_only >= 1,
        "straight-line prediction should swap the crossing targets"
    );
    println!(
        "PASS identity persistence: 0/100 swaps with appearance on, {swaps_motion_only}/100 with motion only"
    );
}

// --- 7. track lifecycle --------------------------------------------------------

#[test]
fn starved_tracks_die_after_exactly_max_age_misses() {
    for max_age in [1u32, 5, 30] {
        let cfg = AssociationConfig {
            max_age,
            ..AssociationConfig::default()
        };
        let mut tracker = Tracker::new(cfg, KalmanFilter::new(MotionConfig::default()));
        let bbox = BoundingBox::new(100.0, 100.0, 16.0, 40.0).unwrap();
        let descriptor = Descriptor::basis(0);
        let mut id = None;
        for t in 0..5u64 {
            let det = Detection::new(t, bbox, 0.9, Some(descriptor.clone())).unwrap();
            let r = tracker.step(t, &[det]).unwrap();
            if t == 0 {
                id = Some(r.new_tracks[0]);
            }
        }
        let id = id.unwrap();
        // Starve it: the track must die on exactly the max_age-th miss.
        for miss in 1..=max_age as u64 + 2 {
            let r = tracker.step(4 + miss, &[]).unwrap();
            if miss < max_age as u64 {
                assert!(r.deleted_tracks.is_empty(), "early death at miss {miss}");
                assert!(r.active_tracks.iter().any(|s| s.id == id));
            } else if miss == max_age as u64 {
                assert_eq!(r.deleted_tracks, vec![id], "max_age {max_age}");
            } else {
                assert!(r.deleted_tracks.is_empty());
            }
        }
    }
    println!("PASS starved tracks deleted after exactly 1, 5, and 30 missed frames");
}

// --- 8. detection quality on the scenario pack ---------------------------------

fn scene_class(name: &str) -> AnomalyCode {
    match name {
        "loiter" => AnomalyCode::Loitering,
        "fast" => AnomalyCode::FastMotion,
        "circle" => AnomalyCode::CircularMotion,
        "jump" => AnomalyCode::Jump,
        "gather" => AnomalyCode::Gathering,
        "disperse" => AnomalyCode::Dispersion,
        other => panic!("unknown scene {other}"),
    }
}

fn converge_scene(actors: usize, duration: u64) -> String {
    let corners = [(80.0, 80.0), (560.0, 80.0), (80.0, 400.0), (560.0, 400.0)];
    let mut s = format!("duration = {duration}\nwidth = 640.0\nheight = 480.0\n");
    for (x, y) in corners.iter().take(actors) {
        s.push_str(&format!(
            "\n[[actors]]\nscript = \"converge\"\nstart = [{x}, {y}]\ntarget = [320.0, 240.0]\nspeed = 2.2\nstandoff = 24.0\nexit = 180\ngroup = 1\n"
        ));
    }
    s
}

#[test]
fn scenario_pack_detection_quality() {
    let started = Instant::now();
    let mut pooled_scores = Vec::new();
    let mut pooled_labels = Vec::new();
    let mut report = String::new();

    for (name, toml) in SCENE_PACK {
        let spec = parse_scenario(toml).unwrap();
        let run = generate_scenario(&spec, 11).unwrap();
        let out = run_pipeline(&PipelineConfig::default(), &run.frames, &mut []).unwrap();
        let code = scene_class(name);
        let class_scores = out.class_scores[code.code() as usize].clone();
        let rec = EvalRecord::new(class_scores, run.truth.class(code)).unwrap();
        let auc = frame_auc(&rec).unwrap();
        report.push_str(&format!(" {name} {auc:.4}"));
        assert!(auc >= 0.95, "{name} class AUC {auc:.4} < 0.95");
        pooled_scores.extend(out.scores);
        pooled_labels.extend(run.truth.pooled());
    }

    // A plain-traffic scene contributes negatives only: any event fired
    // here lands squarely on an unlabeled frame and drags the pool down.
    let spec = parse_scenario(NORMAL_SCENE).unwrap();
    let run = generate_scenario(&spec, 11).unwrap();
    let out = run_pipeline(&PipelineConfig::default(), &run.frames, &mut []).unwrap();
    pooled_scores.extend(out.scores);
    pooled_labels.extend(run.truth.pooled());

    let pooled = frame_auc(&EvalRecord::new(pooled_scores, pooled_labels).unwrap()).unwrap();
    assert!(pooled >= 0.90, "pooled AUC {pooled:.4} < 0.90");

    // Group-size cliff: three people meeting is not a gathering, four is.
    for seed in 0..20 {
        let three = parse_scenario(&converge_scene(3, 200)).unwrap();
        let run = generate_scenario(&three, seed).unwrap();
        let out = run_pipeline(&PipelineConfig::default(), &run.frames, &mut []).unwrap();
        assert!(
            out.events.iter().all(|e| e.code != AnomalyCode::Gathering),
            "3-way meeting fired a gathering at seed {seed}"
        );

        let four = parse_scenario(&converge_scene(4, 200)).unwrap();
        let run = generate_scenario(&four, seed).unwrap();
        let out = run_pipeline(&PipelineConfig::default(), &run.frames, &mut []).unwrap();
        assert!(
            out.events.iter().any(|e| e.code == AnomalyCode::Gathering),
            "4-way meeting missed at seed {seed}"
        );
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!("PASS per-class AUC{report}, pooled {pooled:.4}; 3-way never gathers, 4-way always ({elapsed:?})");
}

// --- 9. template search ----------------------------------------------------------

fn random_unit(rng: &mut ChaCha8Rng) -> FeatureVector {
    let mut v = [0.0f64; FEATURE_DIM];
    loop {
        let mut norm = 0.0;
        for x in &mut v {
            *x = rng.gen_range(-1.0..1.0);
            norm += *x * *x;
        }
        if norm > 1e-3 {
            let norm = norm.sqrt();
            for x in &mut v {
                *x /= norm;
            }
            return v;
        }
    }
}

#[test]
fn template_search_finds_planted_patterns() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..200 {
        let m = rng.gen_range(2..=5);
        let len = rng.gen_range(10..=40).max(m + 1);
        let profiles: Vec<FeatureVector> = (0..m).map(|_| random_unit(&mut rng)).collect();
        let mut sequence: Vec<FeatureVector> = (0..len).map(|_| random_unit(&mut rng)).collect();
        let planted = rng.gen_range(0..=len - m);
        sequence[planted..planted + m].copy_from_slice(&profiles);

        let template = AnomalyTemplate::new(AnomalyCode::Loitering, profiles.clone()).unwrap();
        let shifts: Vec<usize> = (0..=len - m).collect();
        let (w, theta) = vigil::anomaly::match_templates(&sequence, &template, &shifts).unwrap();
        let (w_ref, theta_ref) = brute_force_template_best(&sequence, &profiles).unwrap();
        assert_eq!(w, w_ref, "case {case}");
        assert_eq!(w, planted, "case {case}: planted copy must win");
        assert!((theta - theta_ref).abs() <= 1e-9, "case {case}");

        let mut matcher = TemplateMatcher::new(template);
        for v in &sequence {
            let _ = matcher.push(*v);
        }
        let (w_inc, theta_inc) = matcher.best().unwrap();
        assert_eq!(w_inc, w_ref, "case {case}: incremental shift");
        assert!(
            (theta_inc - theta_ref).abs() <= 1e-9,
            "case {case}: incremental score"
        );
    }
    println!(
        "PASS template search recovers 200 planted patterns, exhaustive == incremental within 1e-9"
    );
}

// --- 10. alert codec ----------------------------------------------------------------

#[test]
fn alert_codec_survives_round_trips_and_rejects_corruption() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10_000 {
        let n = rng.gen_range(0..=15);
        let alert = AnomalyAlert {
            node_id: rng.gen(),
            timestamp: rng.gen(),
            code: rng.gen_range(0..6),
            score_q: quantize_score(rng.gen_range(0.0..=1.0)),
            track_ids: (0..n).map(|_| rng.gen()).collect(),
        };
        let frame = encode_alert(&alert).unwrap();
        assert_eq!(frame.len(), 12 + 2 * n as usize);
        assert!(frame.len() <= 51, "frame fits the uplink budget");
        assert_eq!(decode_alert(&frame).unwrap(), alert);
    }

    // Any single corrupted byte must be rejected, whatever its position.
    let mut rejected = 0u64;
    for _ in 0..10 {
        let n = rng.gen_range(0..=15);
        let alert = AnomalyAlert {
            node_id: rng.gen(),
            timestamp: rng.gen(),
            code: rng.gen_range(0..6),
            score_q: rng.gen(),
            track_ids: (0..n).map(|_| rng.gen()).collect(),
        };
        let frame = encode_alert(&alert).unwrap();
        for i in 0..frame.len() {
            for delta in 1..=255u8 {
                let mut bad = frame.clone();
                bad[i] ^= delta;
                assert!(
                    decode_alert(&bad).is_err(),
                    "byte {i} xor {delta:#04x} slipped through"
                );
                rejected += 1;
            }
        }
    }

    // Pinned reference frame and CRC check values.
    let reference = AnomalyAlert {
        node_id: 1,
        timestamp: 0,
        code: 0,
        score_q: 0,
        track_ids: vec![],
    };
    assert_eq!(
        encode_alert(&reference).unwrap(),
        vec![0xA7, 0x01, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x73, 0xB8]
    );
    assert_eq!(crc16(b"123456789"), 0x29B1);
    assert_eq!(crc16(b""), 0xFFFF);
    let mut buf = vec![0u8; 64];
    for _ in 0..100 {
        rng.fill(&mut buf[..]);
        assert_eq!(crc16(&buf), reference_crc16(&buf));
    }
    println!("PASS alert codec: 10k round trips <= 51 bytes, {rejected} single-byte corruptions all rejected");
}

// --- 11. frame budget ------------------------------------------------------------------

#[test]
fn association_and_rules_fit_the_frame_budget() {
    let mut toml = String::from("duration = 1000\nwidth = 640.0\nheight = 480.0\n");
    for lane in 0..10 {
        let y = 40.0 + 45.0 * lane as f64;
        let (start, v) = if lane % 2 == 0 {
            (10.0, 0.6)
        } else {
            (630.0, -0.6)
        };
        toml.push_str(&format!(
            "\n[[actors]]\nscript = \"walk\"\nstart = [{start}, {y}]\nvelocity = [{v}, 0.0]\n"
        ));
    }
    let spec = parse_scenario(&toml).unwrap();
    let run = generate_scenario(&spec, 21).unwrap();
    let out = run_pipeline(&PipelineConfig::default(), &run.frames, &mut []).unwrap();
    assert_eq!(out.frames, 1000);

    let mut per_frame: Vec<f64> = out
        .timings
        .iter()
        .map(|t| (t.associate + t.anomaly).as_secs_f64() * 1e3)
        .collect();
    let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    per_frame.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p95 = per_frame[(per_frame.len() * 95).div_ceil(100) - 1];
    assert!(
        mean <= 4.0,
        "mean association+rules cost {mean:.3} ms exceeds the 4 ms budget"
    );
    println!("PASS association+rules on 10 tracks x 1000 frames: mean {mean:.3} ms, p95 {p95:.3} ms per frame");
}

// --- 12. reproducibility -----------------------------------------------------------------

#[test]
fn identical_cli_runs_emit_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scene.toml");
    std::fs::write(&scenario, include_str!("scenarios/gather.toml")).unwrap();

    let run = |tag: &str| {
        let track = dir.path().join(format!("{tag}.track.csv"));
        let event = dir.path().join(format!("{tag}.event.tsv"));
        let output = std::process::Command::new(env!("CARGO_BIN_EXE_vigil"))
            .args([
                "run",
                "--scenario",
                scenario.to_str().unwrap(),
                "--seed",
                "7",
                "--track-log",
                track.to_str().unwrap(),
                "--event-log",
                event.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "{}",
            String::from_utf8_lossy(&output.stderr)
        );
        (
            std::fs::read(track).unwrap(),
            std::fs::read(event).unwrap(),
            output.stdout,
        )
    };

    let first = run("a");
    let second = run("b");
    assert_eq!(first.0, second.0, "track logs differ");
    assert_eq!(first.1, second.1, "event logs differ");
    assert_eq!(first.2, second.2, "stdout differs");
    assert!(!first.0.is_empty() && !first.1.is_empty());
    println!("PASS identical seeded runs emit byte-identical track and event logs");
}
