use spider_em::data::{
    drop_constant_columns, load_csv, parse_csv, pca_project, synth_gmm, write_csv, Dataset, PipelineRecord,
};
use spider_em::samplers::split_rng;

fn random_data(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = split_rng(seed, 0);
    let mix: Vec<f64> = (0..d * d).map(|_| rand::Rng::random::<f64>(&mut rng) - 0.5).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rand::Rng::random::<f64>(&mut rng) * 2.0 - 1.0).collect();
            (0..d)
                .map(|r| (0..d).map(|k| mix[r * d + k] * z[k]).sum::<f64>() + r as f64)
                .collect()
        })
        .collect();
    Dataset::from_rows(&rows).unwrap()
}

#[test]
fn csv_write_then_load_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let data = random_data(40, 3, 1);
    let path = dir.path().join("x.csv");
    write_csv(&path, &data, None).unwrap();
    let back = load_csv(&path, false).unwrap();
    assert_eq!((back.len(), back.dim()), (40, 3));
    for (a, b) in data.values().iter().zip(back.values()) {
        assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
    }
    let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    write_csv(&path, &data, Some(&names)).unwrap();
    assert_eq!(load_csv(&path, true).unwrap().values(), back.values());
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(
        load_csv("/no/such/file.csv", false),
        Err(spider_em::Error::Io { .. })
    ));
}

#[test]
fn ragged_row_reports_its_line() {
    let err = parse_csv("1,2\n3,4\n5\n".as_bytes(), false, "t").unwrap_err();
    assert!(matches!(err, spider_em::Error::Parse { row: 3, .. }), "{err}");
}

#[test]
fn no_constant_columns_is_identity() {
    let data = random_data(30, 4, 2);
    let (out, removed) = drop_constant_columns(&data, 0.0).unwrap();
    assert!(removed.is_empty());
    assert_eq!(out.values(), data.values());
}

#[test]
fn border_pixels_removed_match_variance_scan() {
    // 8x8 "images": a zero border, a random interior, and one interior
    // pixel that happens to be constant.
    let mut rng = split_rng(3, 0);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            (0..64)
                .map(|p| {
                    let (r, c) = (p / 8, p % 8);
                    if r == 0 || c == 0 || r == 7 || c == 7 {
                        0.0
                    } else if p == 27 {
                        5.0
                    } else if rand::Rng::random::<f64>(&mut rng) < 0.3 {
                        rand::Rng::random::<f64>(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let data = Dataset::from_rows(&rows).unwrap();
    let scan: Vec<usize> = (0..64)
        .filter(|&c| {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / 200.0;
            rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() == 0.0
        })
        .collect();
    let (out, removed) = drop_constant_columns(&data, 0.0).unwrap();
    assert_eq!(removed, scan);
    assert_eq!(removed.len(), 29);
    assert_eq!(out.dim(), 64 - 29);
    assert!(out.provenance().iter().any(|p| p.contains("29")));
}

#[test]
fn projected_variances_are_eigenvalues() {
    let data = random_data(400, 6, 4);
    let (proj, record) = pca_project(&data, 4, false).unwrap();
    let cov = proj.covariance(true);
    for j in 0..4 {
        assert!((cov[(j, j)] - record.eigenvalues[j]).abs() < 1e-8);
    }
    assert!(record.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    for j in 0..4 {
        let col = record.eigenvectors.column(j);
        let big = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        assert!(big > 0.0);
    }
}

#[test]
fn full_rank_projection_is_an_isometry() {
    let data = random_data(60, 5, 5);
    let (proj, _) = pca_project(&data, 5, false).unwrap();
    for i in 0..60 {
        for j in (i + 1)..60 {
            let d0: f64 = data.row(i).iter().zip(data.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
            let d1: f64 = proj.row(i).iter().zip(proj.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
            assert!((d0.sqrt() - d1.sqrt()).abs() < 1e-8);
        }
    }
}

#[test]
fn whitened_components_have_unit_variance() {
    let data = random_data(300, 4, 6);
    let (proj, _) = pca_project(&data, 3, true).unwrap();
    let cov = proj.covariance(true);
    for j in 0..3 {
        assert!((cov[(j, j)] - 1.0).abs() < 1e-8);
    }
}

#[test]
fn stored_pipeline_is_a_pure_map() {
    let mut rows: Vec<Vec<f64>> = random_data(100, 5, 7).rows().map(|r| r.to_vec()).collect();
    for r in rows.iter_mut() {
        r.insert(2, 1.5);
    }
    let data = Dataset::from_rows(&rows).unwrap();
    let (reduced, removed) = drop_constant_columns(&data, 0.0).unwrap();
    let (projected, projection) = pca_project(&reduced, 3, false).unwrap();
    let record = PipelineRecord {
        input_dim: 6,
        removed_columns: removed,
        projection: Some(projection),
    };
    let once = record.apply(&data).unwrap();
    let twice = record.apply(&data).unwrap();
    assert_eq!(once.values(), twice.values());
    assert_eq!(once.values(), projected.values());

    let dir = tempfile::tempdir().unwrap();
    record.save(dir.path()).unwrap();
    let loaded = PipelineRecord::load(dir.path()).unwrap();
    assert_eq!(loaded.removed_columns, vec![2]);
    let again = loaded.apply(&data).unwrap();
    for (a, b) in again.values().iter().zip(once.values()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn single_component_synthetic_sample_mean() {
    let n = 20_000;
    let (data, truth) = synth_gmm(1, 3, n, 1.0, 9).unwrap();
    let means = data.column_means();
    for k in 0..3 {
        let sd = truth.covariance()[(k, k)].sqrt();
        assert!((means[k] - truth.mean(0)[k]).abs() <= 4.0 * sd / (n as f64).sqrt());
    }
    let (again, _) = synth_gmm(1, 3, n, 1.0, 9).unwrap();
    assert_eq!(again.values(), data.values());
}
