use std::fs;

use stochconf::signals::{
    load_dataset, load_dataset_pair, save_dataset, save_system_csv, split_dataset, Dataset, Format, Role, Signal,
    TimeGrid, TrajectoryPair,
};
use stochconf::systems::{generate_pair_dataset, PairSystem, SystemKind};
use stochconf::Error;

fn sample() -> Dataset {
    generate_pair_dataset(&PairSystem::new(SystemKind::Spacecraft, false), 10, 3, true).unwrap()
}

#[test]
fn grid_times_are_computed() {
    let g = TimeGrid::new(0.0, 0.1, 1001).unwrap();
    assert_eq!(g.time(1000), 100.0);
    assert_eq!(g.time(3), 3.0 * 0.1);
    assert!(TimeGrid::new(0.0, 0.0, 3).is_err());
    assert!(Signal::scalar(g, &[f64::NAN; 1001]).is_err());
}

#[test]
fn pairs_need_matching_shapes() {
    let a = Signal::scalar(TimeGrid::new(0.0, 0.1, 3).unwrap(), &[0.0; 3]).unwrap();
    let b = Signal::scalar(TimeGrid::new(0.0, 0.1, 4).unwrap(), &[0.0; 4]).unwrap();
    assert!(TrajectoryPair::new(0, a.clone(), b, None).is_err());
    assert!(Dataset::new(vec![], Role::Test).is_err());
    let _ = TrajectoryPair::new(0, a.clone(), a, None).unwrap();
}

#[test]
fn json_and_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = sample();
    let json = dir.path().join("d.json");
    save_dataset(&d, &json, Format::Json).unwrap();
    assert_eq!(load_dataset(&json, Format::Json).unwrap(), d);

    let csv = dir.path().join("nested/d.csv");
    save_dataset(&d, &csv, Format::Csv).unwrap();
    let back = load_dataset(&csv, Format::Csv).unwrap();
    assert_eq!(back.len(), d.len());
    for (a, b) in back.pairs().iter().zip(d.pairs()) {
        assert_eq!((a.id, &a.y1, &a.y2), (b.id, &b.y1, &b.y2));
    }

    let (y1, y2) = (dir.path().join("y1.csv"), dir.path().join("y2.csv"));
    save_system_csv(&d, 1, &y1).unwrap();
    save_system_csv(&d, 2, &y2).unwrap();
    let joined = load_dataset_pair(&y1, &y2).unwrap();
    assert_eq!(joined.pairs()[3].y2, d.pairs()[3].y2);
}

#[test]
fn csv_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let one = Dataset::new(vec![sample().pairs()[0].clone()], Role::Calibration).unwrap();
    let p = dir.path().join("one.csv");
    save_dataset(&one, &p, Format::Csv).unwrap();
    let rows = fs::read_to_string(&p).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * one.grid().steps);
}

#[test]
fn bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "traj_id,system,t,x0\n0,1,0.0,1.0\n0,1,0.1,oops\n").unwrap();
    assert!(load_dataset(&p, Format::Csv).is_err());
    assert!(matches!(load_dataset(dir.path().join("missing.json"), Format::Json), Err(Error::Io { .. })));
    let gap = dir.path().join("gap.csv");
    fs::write(&gap, "traj_id,system,t,x0\n0,1,0.0,1.0\n0,1,0.25,1.0\n0,1,0.3,1.0\n0,2,0.0,1.0\n0,2,0.25,1.0\n0,2,0.3,1.0\n").unwrap();
    assert!(load_dataset(&gap, Format::Csv).is_err());
}

#[cfg(unix)]
#[test]
fn unwritable_target() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let ro = dir.path().join("ro");
    fs::create_dir(&ro).unwrap();
    fs::set_permissions(&ro, fs::Permissions::from_mode(0o555)).unwrap();
    let target = ro.join("d.json");
    // Root ignores directory permissions; only check when the write is actually refused.
    if fs::write(ro.join("probe"), "").is_err() {
        assert!(matches!(save_dataset(&sample(), &target, Format::Json), Err(Error::Io { .. })));
    }
}

#[test]
fn splits() {
    let d = sample();
    let (cal, test) = split_dataset(&d, 7, 1).unwrap();
    assert_eq!((cal.len(), test.len()), (7, 3));
    assert_eq!((cal.role(), test.role()), (Role::Calibration, Role::Test));
    let mut ids: Vec<u64> = cal.pairs().iter().chain(test.pairs()).map(|p| p.id).collect();
    ids.sort();
    assert_eq!(ids, (0..10).collect::<Vec<_>>());
    assert_eq!(split_dataset(&d, 7, 1).unwrap().0, cal);
    assert!(split_dataset(&d, 10, 1).is_err());
}
