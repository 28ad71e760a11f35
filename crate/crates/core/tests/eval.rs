use fusemod_core::eval::{
    compare_mask_dirs, format_iou_table, implied_background_iou, relative_improvement, ConfusionMatrix, EvalError,
    IouRow, CLASS_MOVING, CLASS_STATIC,
};
use fusemod_core::ingest::{images, write_bytes, MaskImage};
use proptest::prelude::*;

/// Published (mIoU, Moving IoU) pairs, percent.
const TABLE: [(&str, f64, f64); 14] = [
    ("dark rgb", 62.6, 26.5),
    ("dark rgb+rgbflow", 69.2, 39.5),
    ("dark rgb x rgbflow", 61.68, 24.86),
    ("dark rgb+lidarflow", 68.7, 38.5),
    ("dark rgb pair + depth pair", 66.26, 33.83),
    ("dark hybrid", 69.92, 40.93),
    ("dark rgb+(rgbflow x lidarflow)", 69.8, 40.75),
    ("dark three-stream", 71.2, 43.5),
    ("rgb", 65.6, 32.7),
    ("rgb+rgbflow", 74.24, 49.36),
    ("rgb+lidarflow", 70.27, 41.64),
    ("rgb pair + depth pair", 66.68, 34.67),
    ("rgb+(rgbflow x lidarflow)", 72.21, 45.45),
    ("three-stream", 75.3, 51.46),
];

#[test]
fn published_improvements() {
    assert!((relative_improvement(43.5, 39.5).unwrap() - 10.13).abs() <= 0.05);
    assert!((relative_improvement(51.46, 49.36).unwrap() - 4.25).abs() <= 0.05);
}

#[test]
fn background_iou_of_every_row_is_plausible() {
    for (name, miou, moving) in TABLE {
        let bg = implied_background_iou(miou, moving);
        assert!(bg > 90.0 && bg < 100.0, "{name}: {bg}");
    }
}

proptest! {
    #[test]
    fn improvement_inverts(base in 0.1..100.0f64, new in 0.0..100.0f64) {
        let r = relative_improvement(new, base).unwrap();
        prop_assert!((base * (1.0 + r / 100.0) - new).abs() < 1e-9);
    }

    #[test]
    fn iou_from_random_masks_matches_set_counts(labels in prop::collection::vec((0u8..2, 0u8..2), 1..200)) {
        let pred = MaskImage::new(1, labels.len(), labels.iter().map(|p| p.0).collect()).unwrap();
        let truth = MaskImage::new(1, labels.len(), labels.iter().map(|p| p.1).collect()).unwrap();
        let mut cm = ConfusionMatrix::default();
        cm.update(&pred, &truth).unwrap();
        for class in [CLASS_STATIC, CLASS_MOVING] {
            let c = class as u8;
            let inter = labels.iter().filter(|&&(p, t)| p == c && t == c).count();
            let union = labels.iter().filter(|&&(p, t)| p == c || t == c).count();
            match cm.iou(class) {
                Ok(iou) => prop_assert!((iou - inter as f64 / union as f64).abs() < 1e-15),
                Err(EvalError::UndefinedIoU(k)) => prop_assert_eq!((k, union), (class, 0)),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}

#[test]
fn compare_directories() {
    let (pred, truth) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let t = MaskImage::new(1, 4, vec![1, 1, 0, 0]).unwrap();
    let p = MaskImage::new(1, 4, vec![1, 0, 0, 1]).unwrap();
    for (dir, m) in [(truth.path(), &t), (pred.path(), &p)] {
        write_bytes(dir.join("drive/mask/0000000000.png"), &images::write_mask_png(m).unwrap()).unwrap();
    }
    let cm = compare_mask_dirs(pred.path(), truth.path()).unwrap();
    assert_eq!(cm.counts, [[1, 1], [1, 1]]);
    assert!((cm.iou(CLASS_MOVING).unwrap() - 1.0 / 3.0).abs() < 1e-15);

    write_bytes(truth.path().join("drive/mask/0000000001.png"), &images::write_mask_png(&t).unwrap()).unwrap();
    assert!(matches!(compare_mask_dirs(pred.path(), truth.path()), Err(EvalError::MissingPrediction(_))));
}

#[test]
fn table_lists_rows_in_percent() {
    let cm = ConfusionMatrix { counts: [[6, 1], [1, 2]] };
    let table = format_iou_table(&[IouRow::from_matrix("RGB", &cm)]);
    let row = table.lines().nth(2).unwrap();
    // static 6/8, moving 2/4
    assert_eq!(row.split_whitespace().collect::<Vec<_>>(), ["RGB", "62.50", "50.00"]);
}
