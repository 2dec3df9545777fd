use std::ffi::CStr;
use std::ptr;

use nlos_ffi::*;

fn grid() -> NlosGrid {
    NlosGrid {
        wall_width_m: 0.4,
        scan_res: 8,
        bin_width: 0.025,
        num_bins: 16,
        depth_res: 16,
    }
}

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    let n = unsafe { nlos_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn forward_and_adjoint_satisfy_dot_product_identity() {
    let g = grid();
    unsafe {
        let mut op = ptr::null_mut();
        assert_eq!(nlos_operator_new(&g, &mut op), NlosStatus::Ok);
        let n_rho = 3 * 8 * 8 * 16;
        let n_tau = 8 * 8 * 16;
        let rho_data: Vec<f64> = (0..n_rho).map(|i| (i as f64 * 0.37).sin()).collect();
        let tau_data: Vec<f64> = (0..n_tau).map(|i| (i as f64 * 0.11).cos()).collect();
        let (mut rho, mut tau) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(nlos_albedo_new(&g, rho_data.as_ptr(), n_rho, &mut rho), NlosStatus::Ok);
        assert_eq!(nlos_transient_new(&g, tau_data.as_ptr(), n_tau, &mut tau), NlosStatus::Ok);

        let (mut h_rho, mut ht_tau) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(nlos_forward(op, rho, &mut h_rho), NlosStatus::Ok);
        assert_eq!(nlos_adjoint(op, tau, &mut ht_tau), NlosStatus::Ok);
        assert_eq!(nlos_transient_len(h_rho), n_tau);
        assert_eq!(nlos_albedo_len(ht_tau), n_rho);
        let mut a = vec![0.0; n_tau];
        let mut b = vec![0.0; n_rho];
        assert_eq!(nlos_transient_copy(h_rho, a.as_mut_ptr(), a.len()), NlosStatus::Ok);
        assert_eq!(nlos_albedo_copy(ht_tau, b.as_mut_ptr(), b.len()), NlosStatus::Ok);
        let lhs: f64 = a.iter().zip(&tau_data).map(|(x, y)| x * y).sum();
        let rhs: f64 = b.iter().zip(&rho_data).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()));

        nlos_transient_free(h_rho);
        nlos_albedo_free(ht_tau);
        nlos_transient_free(tau);
        nlos_albedo_free(rho);
        nlos_operator_free(op);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut bad = grid();
    bad.scan_res = 0;
    unsafe {
        let mut op = ptr::null_mut();
        assert_eq!(nlos_operator_new(&bad, &mut op), NlosStatus::InvalidGrid);
        assert!(op.is_null());
        assert!(last_error().contains("grid"));

        assert_eq!(nlos_operator_new(ptr::null(), &mut op), NlosStatus::NullPointer);
        assert_eq!(last_error(), "`grid` is null");

        let g = grid();
        let data = [0.0; 10];
        let mut tau = ptr::null_mut();
        assert_eq!(nlos_transient_new(&g, data.as_ptr(), 10, &mut tau), NlosStatus::DimensionMismatch);

        let mut small = [0.0; 4];
        let full = vec![1.0; 8 * 8 * 16];
        assert_eq!(nlos_transient_new(&g, full.as_ptr(), full.len(), &mut tau), NlosStatus::Ok);
        assert_eq!(nlos_transient_copy(tau, small.as_mut_ptr(), small.len()), NlosStatus::InvalidArgument);
        nlos_transient_free(tau);

        let mut cfg = std::mem::zeroed();
        assert_eq!(nlos_solver_config_default(NlosMethod::Ss, &mut cfg), NlosStatus::Ok);
        cfg.window_len = 8;
        let mut op = ptr::null_mut();
        assert_eq!(nlos_operator_new(&g, &mut op), NlosStatus::Ok);
        let mut tau = ptr::null_mut();
        assert_eq!(nlos_transient_new(&g, full.as_ptr(), full.len(), &mut tau), NlosStatus::Ok);
        let mut rho = ptr::null_mut();
        assert_eq!(
            nlos_reconstruct(op, tau, &cfg, &mut rho, ptr::null_mut()),
            NlosStatus::InvalidArgument
        );
        assert!(last_error().contains("odd side"));
        nlos_transient_free(tau);
        nlos_operator_free(op);
    }
}

#[test]
fn message_buffer_is_truncated_and_terminated() {
    unsafe {
        nlos_operator_new(ptr::null(), &mut ptr::null_mut());
        let mut buf = [1 as std::ffi::c_char; 4];
        let n = nlos_last_error_message(buf.as_mut_ptr(), buf.len());
        assert_eq!(n, "`grid` is null".len());
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_bytes(), b"`gr");
    }
}

#[test]
fn free_functions_accept_null() {
    unsafe {
        nlos_operator_free(ptr::null_mut());
        nlos_transient_free(ptr::null_mut());
        nlos_albedo_free(ptr::null_mut());
        assert_eq!(nlos_transient_len(ptr::null()), 0);
    }
}

#[test]
fn simulate_reconstruct_and_score() {
    let g = NlosGrid {
        wall_width_m: 0.6,
        scan_res: 16,
        bin_width: 1.5 / 32.0,
        num_bins: 32,
        depth_res: 32,
    };
    unsafe {
        let (mut clean, mut truth) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(nlos_simulate(&g, NlosScene::SingleSurfel, 0.5, &mut clean, &mut truth), NlosStatus::Ok);
        let (mut noisy_a, mut noisy_b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(nlos_apply_noise(clean, 100.0, 1.0, 3, &mut noisy_a), NlosStatus::Ok);
        assert_eq!(nlos_apply_noise(clean, 100.0, 1.0, 3, &mut noisy_b), NlosStatus::Ok);
        let n = nlos_transient_len(noisy_a);
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        nlos_transient_copy(noisy_a, a.as_mut_ptr(), n);
        nlos_transient_copy(noisy_b, b.as_mut_ptr(), n);
        assert_eq!(a, b);

        let mut op = ptr::null_mut();
        assert_eq!(nlos_operator_new(&g, &mut op), NlosStatus::Ok);
        let mut cfg = std::mem::zeroed();
        nlos_solver_config_default(NlosMethod::Wiener, &mut cfg);
        cfg.wiener_alpha = 1e4;
        let mut rho = ptr::null_mut();
        let mut iterations = 7u32;
        assert_eq!(nlos_reconstruct(op, clean, &cfg, &mut rho, &mut iterations), NlosStatus::Ok);
        assert_eq!(iterations, 0);
        let mut score = 0.0;
        assert_eq!(nlos_albedo_psnr(rho, truth, &mut score), NlosStatus::Ok);

        let grid = nlos::ScanGrid::new(0.6, 16, 1.5 / 32.0, 32, 32).unwrap();
        let scene = nlos::scene::SurfelScene::single_surfel(&grid, 0.5);
        let tau = nlos::scene::render_transients(&scene, &grid, true).unwrap();
        let want_truth = nlos::scene::rasterize_scene(&scene, &grid).unwrap();
        let core_op = nlos::lct::DlctOperator::new(&grid).unwrap();
        let config = nlos::solvers::SolverConfig {
            method: nlos::solvers::Method::Wiener,
            wiener_alpha: 1e4,
            ..Default::default()
        };
        let (want, _) = nlos::solvers::reconstruct(&core_op, &tau, &config).unwrap();
        let mut got = vec![0.0; nlos_albedo_len(rho)];
        assert_eq!(nlos_albedo_copy(rho, got.as_mut_ptr(), got.len()), NlosStatus::Ok);
        assert_eq!(got, want.data().iter().copied().collect::<Vec<_>>());
        let want_score = nlos::metrics::psnr(
            &nlos::metrics::extract_maps(&want, 0.1).albedo,
            &nlos::metrics::extract_maps(&want_truth, 0.1).albedo,
        )
        .unwrap();
        assert_eq!(score, want_score);
        let mut perfect = 0.0;
        assert_eq!(nlos_albedo_psnr(truth, truth, &mut perfect), NlosStatus::Ok);
        assert!(perfect.is_infinite());

        for t in [clean, noisy_a, noisy_b] {
            nlos_transient_free(t);
        }
        nlos_albedo_free(rho);
        nlos_albedo_free(truth);
        nlos_operator_free(op);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/nlos.h")).unwrap();
    for name in [
        "nlos_last_error_message",
        "nlos_operator_new",
        "nlos_forward",
        "nlos_adjoint",
        "nlos_reconstruct",
        "typedef struct NlosOperator NlosOperator",
        "NLOS_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
