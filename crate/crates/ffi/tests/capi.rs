use std::ffi::{c_void, CStr, CString};
use std::ptr;

use hps_ffi::*;

fn square(p: usize, n: usize) -> HpsLayout {
    HpsLayout {
        p,
        nx: n,
        ny: n,
        mask: ptr::null(),
        h: 1.0 / n as f64,
        origin_x: 0.0,
        origin_y: 0.0,
    }
}

fn helmholtz(kappa: f64) -> HpsOperator {
    HpsOperator {
        kappa,
        convection: 0.0,
        potential: None,
        potential_data: ptr::null_mut(),
        rcond_min: 0.0,
        restrict_rows: 0,
    }
}

fn new_solver(layout: &HpsLayout, op: &HpsOperator) -> *mut HpsSolver {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { hps_solver_new(layout, op, &mut h) }, HpsStatus::Ok);
    assert!(!h.is_null());
    h
}

fn last_error() -> String {
    let p = hps_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Solved {
    u: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    xy: Vec<f64>,
    gamma: Vec<usize>,
}

fn solve_with(h: *mut HpsSolver, f: impl Fn(f64, f64) -> f64) -> Solved {
    unsafe {
        let n = hps_solver_node_count(h);
        let m = hps_solver_boundary_count(h);
        let mut xy = vec![0.0; 2 * n];
        let mut gamma = vec![0usize; m];
        assert_eq!(hps_solver_coordinates(h, xy.as_mut_ptr(), xy.len()), HpsStatus::Ok);
        assert_eq!(hps_solver_boundary_indices(h, gamma.as_mut_ptr(), m), HpsStatus::Ok);
        let data: Vec<f64> = gamma.iter().map(|&g| f(xy[2 * g], xy[2 * g + 1])).collect();
        let (mut u, mut v, mut w) = (vec![0.0; n], vec![0.0; m], vec![0.0; m]);
        let s = hps_solver_solve(h, data.as_ptr(), m, u.as_mut_ptr(), n, v.as_mut_ptr(), w.as_mut_ptr());
        assert_eq!(s, HpsStatus::Ok, "{}", last_error());
        Solved { u, v, w, xy, gamma }
    }
}

#[test]
fn laplace_reproduces_harmonic_polynomial() {
    let h = new_solver(&square(10, 2), &helmholtz(0.0));
    unsafe {
        assert_eq!(hps_solver_node_count(h), 19 * 19);
        assert_eq!(hps_solver_precompute(h), HpsStatus::Ok);
        let s = solve_with(h, |x, y| x * x - y * y + 3.0 * x * y);
        for k in 0..s.u.len() {
            let (x, y) = (s.xy[2 * k], s.xy[2 * k + 1]);
            assert!((s.u[k] - (x * x - y * y + 3.0 * x * y)).abs() < 1e-11);
        }
        for (j, &g) in s.gamma.iter().enumerate() {
            let (x, y) = (s.xy[2 * g], s.xy[2 * g + 1]);
            assert!((s.v[j] - (2.0 * x + 3.0 * y)).abs() < 1e-9);
            assert!((s.w[j] - (-2.0 * y + 3.0 * x)).abs() < 1e-9);
        }
        assert!(hps_solver_min_rcond(h) > 0.0);
        hps_solver_free(h);
    }
}

unsafe extern "C" fn ripple(x1: f64, x2: f64, data: *mut c_void) -> f64 {
    let scale = *(data as *const f64);
    scale * (x1 * x2).sin()
}

#[test]
fn potential_callback_is_used() {
    let mut scale = 0.3f64;
    let mut op = helmholtz(6.0);
    let plain = new_solver(&square(8, 2), &op);
    op.potential = Some(ripple);
    op.potential_data = &mut scale as *mut f64 as *mut c_void;
    let bumped = new_solver(&square(8, 2), &op);
    unsafe {
        assert_eq!(hps_solver_precompute(plain), HpsStatus::Ok);
        assert_eq!(hps_solver_precompute(bumped), HpsStatus::Ok);
        let a = solve_with(plain, |x, _| x.cos());
        let b = solve_with(bumped, |x, _| x.cos());
        let diff = a.u.iter().zip(&b.u).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff > 1e-4);
        hps_solver_free(plain);
        hps_solver_free(bumped);
    }
}

#[test]
fn errors_are_reported_with_messages() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(hps_solver_new(ptr::null(), &helmholtz(1.0), &mut h), HpsStatus::NullPointer);
        let mut bad = square(2, 1);
        assert_eq!(hps_solver_new(&bad, &helmholtz(1.0), &mut h), HpsStatus::InvalidArgument);
        assert!(last_error().contains("p"));
        assert!(h.is_null());

        let mask = [1u8, 0, 0, 1];
        bad = square(5, 2);
        bad.mask = mask.as_ptr();
        assert_eq!(hps_solver_new(&bad, &helmholtz(1.0), &mut h), HpsStatus::UndecomposableLayout);

        let h = new_solver(&square(5, 1), &helmholtz(1.0));
        let f = [0.0; 16];
        let mut u = vec![0.0; 25];
        let s = hps_solver_solve(h, f.as_ptr(), 16, u.as_mut_ptr(), 25, ptr::null_mut(), ptr::null_mut());
        assert_eq!(s, HpsStatus::NotPrecomputed);
        assert_eq!(hps_solver_precompute(h), HpsStatus::Ok);
        let s = hps_solver_solve(h, f.as_ptr(), 15, u.as_mut_ptr(), 25, ptr::null_mut(), ptr::null_mut());
        assert_eq!(s, HpsStatus::DimensionMismatch);
        assert_eq!(hps_solver_precompute(ptr::null_mut()), HpsStatus::NullPointer);
        assert_eq!(hps_solver_node_count(ptr::null()), 0);
        hps_solver_free(h);
        hps_solver_free(ptr::null_mut());
    }
}

#[test]
fn resonance_maps_to_status() {
    let mut op = helmholtz(2.0);
    op.rcond_min = 0.9;
    let h = new_solver(&square(6, 1), &op);
    unsafe {
        assert_eq!(hps_solver_precompute(h), HpsStatus::ResonantLeaf);
        assert!(last_error().contains("leaf 1"));
        hps_solver_free(h);
    }
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("ops.bin").to_str().unwrap()).unwrap();
    let mask = [1u8, 1, 1, 0];
    let mut layout = square(7, 2);
    layout.mask = mask.as_ptr();
    layout.h = 1.0;
    let h = new_solver(&layout, &helmholtz(1.5));
    unsafe {
        assert_eq!(hps_solver_save(h, path.as_ptr()), HpsStatus::NotPrecomputed);
        assert_eq!(hps_solver_precompute(h), HpsStatus::Ok);
        assert_eq!(hps_solver_save(h, path.as_ptr()), HpsStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(hps_solver_load(path.as_ptr(), &mut loaded), HpsStatus::Ok);
        let a = solve_with(h, |x, y| (x - y).sin());
        let b = solve_with(loaded, |x, y| (x - y).sin());
        assert_eq!(a.u, b.u);
        assert_eq!(a.v, b.v);
        assert_eq!(hps_solver_precompute(loaded), HpsStatus::InvalidArgument);
        let missing = CString::new(dir.path().join("none.bin").to_str().unwrap()).unwrap();
        let mut other = ptr::null_mut();
        assert_eq!(hps_solver_load(missing.as_ptr(), &mut other), HpsStatus::Io);
        hps_solver_free(h);
        hps_solver_free(loaded);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(hps_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/hps.h")).unwrap();
    for name in [
        "hps_solver_new",
        "hps_solver_precompute",
        "hps_solver_solve",
        "hps_solver_free",
        "hps_last_error_message",
        "HPS_STATUS_RESONANT_MERGE",
        "typedef struct HpsSolver HpsSolver",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    // compile the header as C when a compiler is available
    if let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", "-"])
        .stdin(std::process::Stdio::piped())
        .spawn()
        .and_then(|mut child| {
            use std::io::Write;
            let src = format!("#include \"{}/include/hps.h\"\nint main(void) {{ return 0; }}\n", env!("CARGO_MANIFEST_DIR"));
            child.stdin.take().unwrap().write_all(src.as_bytes())?;
            child.wait()
        })
    {
        assert!(status.success());
    }
}
