use std::fs;

use surgbench_core::camera::Perturbation;
use surgbench_core::{ObservationSpace, TaskName};
use surgbench_eval::plot::{HEIGHT, PALETTE, WIDTH};
use surgbench_eval::report::{RESULTS_HEADER, TABLE1_MODELS};
use surgbench_eval::{
    emit_report, Curve, CurvePoint, EvalResult, InstanceRow, InstanceTable, Report,
};

fn result(
    task: TaskName,
    model: &str,
    protocol: &str,
    condition: &str,
    successes: usize,
) -> EvalResult {
    EvalResult {
        task,
        model: model.into(),
        space: Some(ObservationSpace::SingleCamera),
        protocol: protocol.into(),
        condition: condition.into(),
        n_trials: 4,
        successes,
        success_rate: successes as f64 / 4.0,
        seeds: vec![1, 2, 3, 4],
        errors: vec![],
        perturbations: vec![],
        wall_seconds: 1.5,
    }
}

fn decode(path: &std::path::Path) -> (u32, u32, Vec<u8>) {
    let decoder = png::Decoder::new(std::io::BufReader::new(fs::File::open(path).unwrap()));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    buf.truncate(info.buffer_size());
    (info.width, info.height, buf)
}

#[test]
fn empty_report_has_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    emit_report(&Report::default(), dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv, format!("{RESULTS_HEADER}\n"));
    assert!(!dir.path().join("sample_efficiency.csv").exists());
}

#[test]
fn full_matrix_has_twenty_cells() {
    let mut results = Vec::new();
    for (i, task) in TaskName::ALL.into_iter().enumerate() {
        for (j, m) in TABLE1_MODELS.iter().enumerate() {
            results.push(result(task, m, "table1", "train", (i + j) % 5));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    emit_report(
        &Report {
            results,
            ..Default::default()
        },
        dir.path(),
    )
    .unwrap();
    let md = fs::read_to_string(dir.path().join("table1.md")).unwrap();
    let rows: Vec<&str> = md.lines().skip(2).collect();
    assert_eq!(rows.len(), 5);
    let cells: usize = rows
        .iter()
        .map(|r| r.split('|').filter(|c| !c.trim().is_empty()).count() - 1)
        .sum();
    assert_eq!(cells, 20);
    assert!(!md.contains(" - "));
    assert!(rows[0].starts_with("| tissue_retraction | 0.00 | 0.25 | 0.50 | 0.75 |"));
}

#[test]
fn curves_tables_and_plots_are_written_reproducibly() {
    let curve = Curve {
        task: TaskName::NeedleLift,
        model: "DP3".into(),
        points: [10, 30]
            .iter()
            .map(|&n| CurvePoint {
                n_demos: n,
                demo_seeds: (0..n as u64).collect(),
                result: Some(result(
                    TaskName::NeedleLift,
                    "DP3",
                    "sample-eff",
                    &n.to_string(),
                    n / 10,
                )),
                diverged: None,
            })
            .collect(),
    };
    let mut view1 = result(TaskName::NeedleLift, "ACT-S", "viewpoint", "view1", 1);
    view1.perturbations = vec![(
        1,
        Perturbation {
            translation: [0.01, 0.0, -0.005],
            rotation_deg: [1.0, -2.0, 0.5],
        },
    )];
    let row = |needle: &str, train: bool, k| InstanceRow {
        needle: needle.into(),
        train,
        result: result(TaskName::NeedleLift, "ACT-S", "instance-gen", needle, k),
    };
    let report = Report {
        results: vec![
            result(TaskName::NeedleLift, "ACT-S", "viewpoint", "train", 3),
            view1,
        ],
        curves: vec![curve],
        instances: vec![InstanceTable {
            task: TaskName::NeedleLift,
            model: "ACT-S".into(),
            rows: vec![row("N1", true, 4), row("N2", false, 2), row("N3", false, 1)],
            average: Some(0.375),
        }],
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let files = emit_report(&report, a.path()).unwrap();
    emit_report(&report, b.path()).unwrap();
    for f in &files {
        let name = f.file_name().unwrap();
        if name != "timings.csv" {
            assert_eq!(
                fs::read(f).unwrap(),
                fs::read(b.path().join(name)).unwrap(),
                "{name:?}"
            );
        }
    }

    let curve_csv = fs::read_to_string(a.path().join("sample_efficiency.csv")).unwrap();
    let ns: Vec<&str> = curve_csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(ns, ["10", "30"]);

    let t2 = fs::read_to_string(a.path().join("table2.md")).unwrap();
    assert!(t2.contains("| N1 (train) | 1.00 |"));
    assert!(t2.contains("| Average | 0.38 |"));

    let p = fs::read_to_string(a.path().join("perturbations.csv")).unwrap();
    assert_eq!(p.lines().count(), 2);

    for plot in ["sample_efficiency_needle_lift.png", "viewpoint.png"] {
        let (w, h, rgb) = decode(&a.path().join(plot));
        assert_eq!((w, h), (WIDTH, HEIGHT));
        let colored = rgb
            .chunks(3)
            .filter(|px| PALETTE.iter().any(|c| c == px))
            .count();
        assert!(colored > 50, "{plot}: {colored} series pixels");
    }
}
