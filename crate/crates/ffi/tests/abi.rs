use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use swarmplan_ffi::*;

fn last_error() -> String {
    let p = sp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

#[test]
fn map_handle_round_trip() {
    let mut map = ptr::null_mut();
    unsafe {
        assert_eq!(sp_map_build(5, SpScale::Desk, 7, &mut map), SpStatus::Ok);
        let mut dims = [0u64; 3];
        assert_eq!(sp_map_dims(map, dims.as_mut_ptr()), SpStatus::Ok);
        assert_eq!(dims, [32, 32, 32]);
        assert_eq!(sp_map_target_count(map), 3);
        let f = sp_map_static_fraction(map);
        assert!(f > 0.0 && f < 0.5, "{f}");
        let mut occ = false;
        assert_eq!(sp_map_is_static(map, -1, 0, 0, &mut occ), SpStatus::Ok);
        assert!(occ);
        sp_map_free(map);
        sp_map_free(ptr::null_mut());
    }
}

#[test]
fn bad_arguments_set_codes_and_messages() {
    unsafe {
        let mut map = ptr::null_mut();
        assert_eq!(sp_map_build(9, SpScale::Desk, 0, &mut map), SpStatus::InvalidConfig);
        assert!(map.is_null());
        assert!(last_error().contains('9'), "{}", last_error());

        assert_eq!(
            sp_map_build(5, SpScale::Desk, 0, ptr::null_mut()),
            SpStatus::NullPointer
        );

        let mut ep = ptr::null_mut();
        let algo = CString::new("AStar").unwrap();
        assert_eq!(
            sp_episode_run(5, SpScale::Desk, algo.as_ptr(), 0, &mut ep),
            SpStatus::InvalidConfig
        );
        assert!(last_error().contains("AStar"));
        assert_eq!(
            sp_episode_run(5, SpScale::Desk, ptr::null(), 0, &mut ep),
            SpStatus::NullPointer
        );

        let mut dims = [0u64; 3];
        assert_eq!(sp_map_dims(ptr::null(), dims.as_mut_ptr()), SpStatus::NullPointer);
        assert_eq!(sp_map_target_count(ptr::null()), 0);
        assert!(sp_map_static_fraction(ptr::null()).is_nan());
    }
}

#[test]
fn episode_runs_and_replays_clean() {
    let algo = CString::new("hgso").unwrap();
    let mut ep = ptr::null_mut();
    unsafe {
        assert_eq!(
            sp_episode_run(5, SpScale::Desk, algo.as_ptr(), 3, &mut ep),
            SpStatus::Ok
        );
        let mut m = SpMetrics::default();
        assert_eq!(sp_episode_metrics(ep, &mut m), SpStatus::Ok);
        assert_eq!(m.targets, 3);
        assert!(m.cost > 0.0 && m.expanded_nodes > 0);
        assert_eq!(m.elapsed_ms, m.ticks * 100);

        let n = sp_episode_tick_count(ep);
        assert_eq!(n, m.ticks + 1);
        let mut xyz = [0.0; 3];
        assert_eq!(sp_episode_position(ep, 0, xyz.as_mut_ptr()), SpStatus::Ok);
        assert_eq!(sp_episode_position(ep, n, xyz.as_mut_ptr()), SpStatus::InvalidArgument);

        let mut violations = u64::MAX;
        assert_eq!(sp_episode_replay(ep, &mut violations), SpStatus::Ok);
        assert_eq!(violations, 0);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("ep.log").to_str().unwrap()).unwrap();
        assert_eq!(sp_episode_write_log(ep, path.as_ptr()), SpStatus::Ok);
        let bad = CString::new(dir.path().join("missing/ep.log").to_str().unwrap()).unwrap();
        assert_eq!(sp_episode_write_log(ep, bad.as_ptr()), SpStatus::Io);
        sp_episode_free(ep);
    }
}

#[test]
fn experiment_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(
        &spec,
        "algorithms = [\"GSO\"]\nmaps = [1]\nseeds = [0, 1]\n[planner]\ntick_budget = 50\n",
    )
    .unwrap();
    let spec_c = CString::new(spec.to_str().unwrap()).unwrap();
    let out_c = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    let mut n = 0u64;
    unsafe {
        assert_eq!(sp_experiment_run(spec_c.as_ptr(), out_c.as_ptr(), &mut n), SpStatus::Ok);
    }
    assert_eq!(n, 2);
    assert!(dir.path().join("out/results.csv").exists());

    std::fs::write(&spec, "algorithms = [\"GSO\"]\nbogus = 1\n").unwrap();
    unsafe {
        assert_eq!(
            sp_experiment_run(spec_c.as_ptr(), out_c.as_ptr(), ptr::null_mut()),
            SpStatus::Parse
        );
    }
    assert!(last_error().contains("bogus"));
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(sp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = include.join("swarmplan.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["sp_map_build", "sp_episode_run", "sp_last_error", "SP_STATUS_PANIC"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"swarmplan.h\"\nint main(void) { SpMap *m = 0; SpStatus s = sp_map_build(5, SP_SCALE_DESK, 0, &m); sp_map_free(m); return (int)s; }\n",
    )
    .unwrap();
    for (compiler, extra) in [("cc", &["-std=c99"][..]), ("c++", &["-x", "c++"][..])] {
        let status = Command::new(compiler)
            .args(extra)
            .arg("-fsyntax-only")
            .arg("-Wall")
            .arg("-Werror")
            .arg("-I")
            .arg(&include)
            .arg(&src)
            .status();
        match status {
            Ok(s) => assert!(s.success(), "{compiler} rejected the header"),
            Err(e) => eprintln!("skipping {compiler}: {e}"),
        }
    }
}
