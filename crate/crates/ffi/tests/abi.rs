use std::ffi::{CStr, CString};
use std::ptr;

use emcom::cli::{generate_dataset, GeneratorSpec};
use emcom_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    emcom_string_free(p);
    s
}

fn dataset_json() -> String {
    let spec = GeneratorSpec {
        n_agents: 2,
        n_objects: 8,
        n_true_signs: 2,
        n_categories: 2,
        n_features: 4,
        tokens: 4,
        noise: 0.0,
        seed: 3,
    };
    generate_dataset(&spec).unwrap().to_json().unwrap()
}

const GAME: &str = r#"{"n_agents":2,"n_objects":8,"vocab_size":2,"n_categories":2,
    "n_features":4,"n_rounds":0,"seed":9}"#;

#[test]
fn naming_game_round_trip() {
    unsafe {
        let mut game = ptr::null_mut();
        let (cfg, ds) = (cstr(GAME), cstr(&dataset_json()));
        assert_eq!(emcom_naming_game_new(cfg.as_ptr(), ds.as_ptr(), &mut game), EmcomStatus::Ok);
        assert!(!game.is_null());
        assert_eq!(emcom_naming_game_step(game, 3), EmcomStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(emcom_naming_game_signs(game, &mut out), EmcomStatus::Ok);
        let signs: Vec<Vec<usize>> = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(signs.len(), 2);
        assert!(signs.iter().all(|s| s.len() == 8 && s.iter().all(|m| *m < 2)));
        assert_eq!(emcom_naming_game_trace(game, &mut out), EmcomStatus::Ok);
        let trace = emcom::naming::GameTrace::from_jsonl(&take(out)).unwrap();
        assert_eq!(trace.metrics.len(), 4);
        emcom_naming_game_free(game);
    }
}

#[test]
fn handle_runs_match_the_library() {
    let cfg: emcom::naming::GameConfig =
        serde_json::from_str(&GAME.replace("\"n_rounds\":0", "\"n_rounds\":3")).unwrap();
    let ds = emcom::pgm::Dataset::from_json(&dataset_json()).unwrap();
    let (_, state) = emcom::naming::run_game(&cfg, &ds, Default::default()).unwrap();
    unsafe {
        let mut game = ptr::null_mut();
        let (c, d) = (cstr(GAME), cstr(&dataset_json()));
        emcom_naming_game_new(c.as_ptr(), d.as_ptr(), &mut game);
        emcom_naming_game_step(game, 3);
        let mut out = ptr::null_mut();
        emcom_naming_game_signs(game, &mut out);
        let signs: Vec<Vec<usize>> = serde_json::from_str(&take(out)).unwrap();
        let want: Vec<Vec<usize>> = state.agents.iter().map(|a| a.signs.clone()).collect();
        assert_eq!(signs, want);
        emcom_naming_game_free(game);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut game = ptr::null_mut();
        let ds = cstr(&dataset_json());
        assert_eq!(emcom_naming_game_new(ptr::null(), ds.as_ptr(), &mut game), EmcomStatus::NullPointer);
        assert!(game.is_null());
        let bad = cstr("{not json");
        assert_eq!(emcom_naming_game_new(bad.as_ptr(), ds.as_ptr(), &mut game), EmcomStatus::Json);
        assert!(!CStr::from_ptr(emcom_last_error()).to_bytes().is_empty());
        let mismatch = cstr(&GAME.replace("\"n_objects\":8", "\"n_objects\":5"));
        assert_eq!(emcom_naming_game_new(mismatch.as_ptr(), ds.as_ptr(), &mut game), EmcomStatus::Config);
        assert_eq!(emcom_naming_game_step(ptr::null_mut(), 1), EmcomStatus::NullPointer);
        let unknown = cstr("kind = \"nope\"\nseed = 1\n");
        assert_eq!(emcom_run_experiment(unknown.as_ptr()), EmcomStatus::Config);
        emcom_naming_game_free(ptr::null_mut());
        emcom_string_free(ptr::null_mut());
    }
}

#[test]
fn verify_reports_no_failures() {
    unsafe {
        let mut out = ptr::null_mut();
        let mut failed = usize::MAX;
        assert_eq!(emcom_verify(&mut out, &mut failed), EmcomStatus::Ok);
        assert_eq!(failed, 0);
        let reports: Vec<serde_json::Value> = serde_json::from_str(&take(out)).unwrap();
        assert!(!reports.is_empty());
    }
}

#[test]
fn run_experiment_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sig");
    let text = format!(
        "kind = \"signaling-game\"\nseed = 2\noutput_dir = {:?}\n[signaling]\nsteps = 20\n",
        out.display().to_string()
    );
    unsafe {
        assert_eq!(emcom_run_experiment(cstr(&text).as_ptr()), EmcomStatus::Ok);
    }
    assert!(out.join("summary.json").exists());
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(emcom_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/emcom.h");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let Ok(status) = std::process::Command::new(&cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler available, skipping");
        return;
    };
    assert!(status.success());
}
