use std::io::Cursor;

use zinbarma::core::model::Dataset;
use zinbarma::data::{load_csv_dataset, read_csv_dataset, write_csv_dataset, write_csv_to, ColumnSelection};

fn read(text: &str) -> Result<Dataset, String> {
    read_csv_dataset(Cursor::new(text), &ColumnSelection::default())
}

#[test]
fn zero_fraction_of_149_rows_with_66_zeros() {
    let mut text = String::from("t,y,rain\n");
    for t in 1..=149 {
        let y = if t <= 66 { 0 } else { t % 7 + 1 };
        text.push_str(&format!("{t},{y},{}\n", t as f64 * 0.25));
    }
    let d = read(&text).unwrap();
    assert_eq!(d.len(), 149);
    assert_eq!(d.zero_count(), 66);
    assert!((d.zero_fraction() - 0.4429).abs() < 1e-4);
    assert_eq!(d.column("rain").unwrap()[3], 1.0);
}

#[test]
fn negative_count_names_its_row() {
    let mut text = String::from("y\n");
    for i in 1..=10 {
        text.push_str(if i == 7 { "-1\n" } else { "3\n" });
    }
    let e = read(&text).unwrap_err();
    assert!(e.contains("row 7") && e.contains("negative"), "{e}");
}

#[test]
fn malformed_cells_are_errors() {
    assert!(read("y\n1\n2.5\n").unwrap_err().contains("row 2"));
    assert!(read("y,x\n1,0.5\n2,\n").unwrap_err().contains("missing value"));
    assert!(read("y,x\n1,abc\n").unwrap_err().contains("non-numeric"));
    assert!(read("y,x\n,1\n").unwrap_err().contains("missing count"));
    assert!(read("count\n1\n").unwrap_err().contains("missing count column"));
    assert!(read("").unwrap_err().contains("empty"));
    assert!(read("y\n").is_err());
    let sel = ColumnSelection { y: "y".into(), covariates: Some(vec!["temp".into()]) };
    assert!(read_csv_dataset(Cursor::new("y,rain\n1,2\n"), &sel).unwrap_err().contains("temp"));
}

#[test]
fn integral_float_counts_accepted() {
    assert_eq!(read("y\n3.0\n0\n").unwrap().y, vec![3, 0]);
}

#[test]
fn write_then_read_round_trip() {
    let d = Dataset::new(vec![0, 4, 0, 17, 2])
        .with_column("temp", vec![21.5, 0.1 + 0.2, -1e-300, 1.0 / 3.0, 6.02e23])
        .with_column("rh", vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    let mut buf = Vec::new();
    write_csv_to(&mut buf, &d).unwrap();
    let back = read(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(back.y, d.y);
    assert_eq!(back.columns, d.columns);
    assert_eq!(back.time, Some(vec![1, 2, 3, 4, 5]));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_csv_dataset(&path, &back).unwrap();
    let again = load_csv_dataset(&path, &ColumnSelection::default()).unwrap();
    assert_eq!(again, back);
}

#[test]
fn missing_file_is_io_error() {
    let e = load_csv_dataset(std::path::Path::new("/nonexistent/x.csv"), &ColumnSelection::default()).unwrap_err();
    assert_eq!(e.exit_code(), 1);
}
