//! Label generation on synthetic scenes.

use flowpose::eval::{aggregate_report, evaluate_frame, PartJointMapping};
use flowpose::ingest::{BBox, Detection};
use flowpose::supervise::{generate_sample, label_pair, LabelConfig, Rejection, SampleOutcome};
use flowpose::synth::{render_sequence, FigureShape, SynthConfig};

fn mean_rows(labels: &[u8], w: usize, parts: u8) -> Vec<Option<f64>> {
    (1..=parts)
        .map(|p| {
            let rows: Vec<f64> = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == p)
                .map(|(i, _)| (i / w) as f64)
                .collect();
            (!rows.is_empty()).then(|| rows.iter().sum::<f64>() / rows.len() as f64)
        })
        .collect()
}

#[test]
fn moving_rectangle_yields_five_ordered_parts() {
    let synth = SynthConfig::default();
    let scene = render_sequence(&synth).unwrap();
    let dets = scene.detections();
    let cfg = LabelConfig::default();
    let mapping = PartJointMapping::five_part();
    let mut records = Vec::new();
    for k in 0..scene.frames.len() - 1 {
        let out = label_pair(&scene.frames[k], &scene.frames[k + 1], &dets, &cfg).unwrap();
        let map = out.outcome.unwrap_or_else(|r| panic!("pair {k} rejected: {r}"));
        assert_eq!(map.present_labels(), vec![1, 2, 3, 4, 5]);
        let rows = mean_rows(map.labels(), map.width(), 5);
        assert!(rows.windows(2).all(|w| w[0].unwrap() < w[1].unwrap()), "{rows:?}");
        // support inside the person box
        let bbox = scene.boxes[k];
        for (i, &l) in map.labels().iter().enumerate() {
            if l != 0 {
                assert!(bbox.contains((i % synth.width) as i64, (i / synth.width) as i64));
            }
        }
        records.push(evaluate_frame(&map, &scene.keypoints[k], &mapping));
    }
    let band_height = synth.figure_height as f64 / 5.0;
    for row in aggregate_report(&records, &mapping) {
        let mean = row.mean_distance.unwrap();
        assert!(mean <= band_height / 2.0, "{:?}: {mean}", row.joint);
    }
}

#[test]
fn stick_figure_is_labelled() {
    let cfg = SynthConfig {
        shape: FigureShape::StickFigure,
        frames: 4,
        ..Default::default()
    };
    let scene = render_sequence(&cfg).unwrap();
    let out = label_pair(
        &scene.frames[0],
        &scene.frames[1],
        &scene.detections(),
        &LabelConfig::default(),
    )
    .unwrap();
    let map = out.outcome.expect("accepted");
    assert_eq!(map.present_labels(), vec![1, 2, 3, 4, 5]);
}

#[test]
fn static_scene_is_gate_low() {
    let scene = render_sequence(&SynthConfig {
        velocity: (0, 0),
        frames: 2,
        ..Default::default()
    })
    .unwrap();
    let out = label_pair(
        &scene.frames[0],
        &scene.frames[1],
        &scene.detections(),
        &LabelConfig::default(),
    )
    .unwrap();
    assert_eq!(out.outcome, Err(Rejection::GateLow));
    assert_eq!(out.moving_fraction, 0.0);
}

#[test]
fn frame_filling_motion_is_gate_high() {
    let scene = render_sequence(&SynthConfig {
        figure_x: 0,
        figure_y: 4,
        figure_width: 120,
        figure_height: 120,
        velocity: (1, 0),
        frames: 2,
        ..Default::default()
    })
    .unwrap();
    let out = label_pair(
        &scene.frames[0],
        &scene.frames[1],
        &scene.detections(),
        &LabelConfig::default(),
    )
    .unwrap();
    assert_eq!(
        out.outcome,
        Err(Rejection::GateHigh),
        "fraction {}",
        out.moving_fraction
    );
}

#[test]
fn person_rules() {
    let scene = render_sequence(&SynthConfig {
        frames: 2,
        ..Default::default()
    })
    .unwrap();
    let cfg = LabelConfig::default();
    let mut two = scene.detections();
    two.push(Detection {
        frame_index: 0,
        bbox: BBox::new(90, 5, 120, 40).unwrap(),
        score: 0.5,
    });
    let out = label_pair(&scene.frames[0], &scene.frames[1], &two, &cfg).unwrap();
    assert_eq!(out.outcome, Err(Rejection::MultiPerson));

    let out = label_pair(&scene.frames[0], &scene.frames[1], &[], &cfg).unwrap();
    assert_eq!(out.outcome, Err(Rejection::NoPerson));

    // a lone box far from the motion
    let elsewhere = [Detection {
        frame_index: 0,
        bbox: BBox::new(90, 5, 120, 40).unwrap(),
        score: 0.5,
    }];
    let out = label_pair(&scene.frames[0], &scene.frames[1], &elsewhere, &cfg).unwrap();
    assert_eq!(out.outcome, Err(Rejection::NoBlobs));

    // a box entirely off-frame clamps to nothing
    let off = [Detection {
        frame_index: 0,
        bbox: BBox::new(200, 200, 220, 240).unwrap(),
        score: 0.5,
    }];
    let out = label_pair(&scene.frames[0], &scene.frames[1], &off, &cfg).unwrap();
    assert_eq!(out.outcome, Err(Rejection::NoPerson));
}

#[test]
fn generate_sample_writes_label_file() {
    let dir = tempfile::tempdir().unwrap();
    let scene = render_sequence(&SynthConfig {
        frames: 2,
        ..Default::default()
    })
    .unwrap();
    let out = generate_sample(
        &scene.frames[0],
        &scene.frames[1],
        &scene.detections(),
        &LabelConfig::default(),
        std::path::Path::new("frames/frame_000000.pgm"),
        dir.path(),
    )
    .unwrap();
    let SampleOutcome::Accepted(rec) = out else {
        panic!("rejected: {out:?}");
    };
    assert_eq!(rec.label_path, dir.path().join("label_000000.pgm"));
    let map = flowpose::ingest::read_label_map(&rec.label_path, Some(5)).unwrap();
    assert_eq!(map.present_labels(), vec![1, 2, 3, 4, 5]);
    assert!(rec.blob_count >= 1);
    assert_eq!(rec.error_score, None);
}
