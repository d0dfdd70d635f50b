use spatial_logistic::kernels::{Kernel, ModelParams};
use spatial_logistic::simulator::{read_run, run, write_run, InitialCondition, SimConfig};

fn config(seed: u64) -> SimConfig {
    SimConfig {
        params: ModelParams::new(
            0.2,
            Kernel::gaussian(0.5, 0.4, 2).unwrap(),
            Kernel::tophat(0.1, 1.0, 2).unwrap(),
            8.0,
        )
        .unwrap(),
        t_max: 3.0,
        initial: InitialCondition::Poisson { density: 0.5 },
        snapshot_times: vec![0.0, 1.0, 2.0, 3.0],
        seed,
        replicas: 6,
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempdir("same-seed");
    let a = run(&config(11)).unwrap();
    let b = run(&config(11)).unwrap();
    write_run(&dir.join("a"), &a, 8.0, 2, 11, 3.0).unwrap();
    write_run(&dir.join("b"), &b, 8.0, 2, 11, 3.0).unwrap();
    for r in 0..6 {
        let name = format!("replica_{r:05}.csv");
        assert_eq!(
            std::fs::read(dir.join("a").join(&name)).unwrap(),
            std::fs::read(dir.join("b").join(&name)).unwrap()
        );
    }
    assert_ne!(a, run(&config(12)).unwrap());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn written_runs_read_back() {
    let dir = tempdir("read-back");
    let trajs = run(&config(3)).unwrap();
    let summary = write_run(&dir, &trajs, 8.0, 2, 3, 3.0).unwrap();
    let (s2, back) = read_run(&dir).unwrap();
    assert_eq!(summary, s2);
    assert_eq!(back, trajs);
    std::fs::remove_dir_all(&dir).unwrap();
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("slm-sim-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}
