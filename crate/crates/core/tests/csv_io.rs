use std::fs;

use sigmaforest::dataset::{generate, read_csv, write_csv, CsvSchema, GeneratorConfig, TargetKind};
use sigmaforest::error::Error;

fn schema(x: &[&str], y: Option<&str>, z: Option<&str>) -> CsvSchema {
    CsvSchema {
        x: x.iter().map(|s| s.to_string()).collect(),
        y: y.map(String::from),
        z: z.map(String::from),
    }
}

#[test]
fn generated_data_survives_a_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("combined.csv");
    let d = generate(&GeneratorConfig::periodic(TargetKind::Cos2Combined, 2.0, 50, 3).with_b(0.3)).unwrap();
    write_csv(&d, &path).unwrap();
    let back = read_csv(&path, &schema(&["x"], Some("y"), Some("z"))).unwrap();
    assert_eq!(back.x, d.x);
    assert_eq!(back.y, d.y);
    assert_eq!(back.z, d.z);
    assert_eq!(back.z_mask, d.z_mask);
}

#[test]
fn columns_are_found_by_name_in_any_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("shuffled.csv");
    fs::write(&path, "note,z,temp,y\na,1.5,400,10\nb,2.5,401,11\n").unwrap();
    let d = read_csv(&path, &schema(&["temp"], Some("y"), Some("z"))).unwrap();
    assert_eq!(d.feature_names, vec!["temp"]);
    assert_eq!(d.x.column(0), &[400.0, 401.0]);
    assert_eq!(d.y().unwrap(), &[10.0, 11.0]);
    assert_eq!(d.z().unwrap(), &[1.5, 2.5]);
}

#[test]
fn empty_z_cells_are_unobserved() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("partial.csv");
    fs::write(&path, "x,y,z\n0,1,2\n1,2,\n2,3,4\n").unwrap();
    let d = read_csv(&path, &schema(&["x"], Some("y"), Some("z"))).unwrap();
    assert_eq!(d.observed_z_rows(), vec![0, 2]);
    assert_eq!(d.masked_z_rows(), vec![1]);
}

#[test]
fn missing_column_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.csv");
    fs::write(&path, "x,y\n0,1\n").unwrap();
    let err = read_csv(&path, &schema(&["x"], Some("y"), Some("z"))).unwrap_err();
    assert!(!matches!(err, Error::Io { .. }), "{err:?}");
    assert!(err.to_string().contains('z'), "{err}");
}

#[test]
fn non_numeric_cell_names_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "x,y\n0,1\nfoo,2\n").unwrap();
    let err = read_csv(&path, &schema(&["x"], Some("y"), None)).unwrap_err();
    assert!(err.to_string().contains("foo"), "{err}");
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = read_csv(&dir.path().join("absent.csv"), &schema(&["x"], None, None)).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
}
