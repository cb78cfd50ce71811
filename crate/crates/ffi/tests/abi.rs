use std::ffi::{CStr, CString};
use std::ptr;

use lomae_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(lomae_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn simulate_build_forward_free() {
    unsafe {
        let kind = CString::new("ellipse_soup").unwrap();
        let (mut noisy, mut clean) = (ptr::null_mut(), ptr::null_mut());
        let st = lomae_simulate_pair(kind.as_ptr(), 64, 60, 2.5e5, 0.0035, 3, &mut noisy, &mut clean);
        assert_eq!(st, LomaeStatus::Ok, "{}", last_error());
        let (mut h, mut w) = (0, 0);
        assert_eq!(lomae_slice_dims(noisy, &mut h, &mut w), LomaeStatus::Ok);
        assert_eq!((h, w), (64, 64));

        let preset = CString::new("desk_swinir").unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(lomae_model_build(preset.as_ptr(), 1, &mut model), LomaeStatus::Ok);
        let mut size = 0;
        assert_eq!(lomae_model_input_size(model, &mut size), LomaeStatus::Ok);
        assert_eq!(size, 64);
        let mut on = ptr::null_mut();
        assert_eq!(lomae_model_forward(model, noisy, &mut on), LomaeStatus::Ok);
        assert_eq!(lomae_model_set_shortcut(model, 0), LomaeStatus::Ok);
        let mut off = ptr::null_mut();
        assert_eq!(lomae_model_forward(model, noisy, &mut off), LomaeStatus::Ok);

        let mut a = vec![0f32; 64 * 64];
        let mut b = vec![0f32; 64 * 64];
        let mut x = vec![0f32; 64 * 64];
        assert_eq!(lomae_slice_copy(on, a.as_mut_ptr(), a.len()), LomaeStatus::Ok);
        assert_eq!(lomae_slice_copy(off, b.as_mut_ptr(), b.len()), LomaeStatus::Ok);
        assert_eq!(lomae_slice_copy(noisy, x.as_mut_ptr(), x.len()), LomaeStatus::Ok);
        // outputs are narrowed to f32 on copy, so allow half an ulp on each
        for i in 0..x.len() {
            let d = a[i] as f64 - b[i] as f64 - x[i] as f64;
            let ulp = f32::EPSILON as f64 * (a[i].abs().max(b[i].abs()) as f64).max(f32::MIN_POSITIVE as f64);
            assert!(d.abs() <= ulp, "pixel {i}: {d}");
        }
        let mut s = 0.0;
        assert_eq!(lomae_ssim(clean, clean, &mut s), LomaeStatus::Ok);
        assert_eq!(s, 1.0);

        for p in [noisy, clean, on, off] {
            lomae_slice_free(p);
        }
        lomae_model_free(model);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let preset = CString::new("huge").unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(lomae_model_build(preset.as_ptr(), 0, &mut model), LomaeStatus::Config);
        assert!(last_error().contains("huge"));
        assert!(model.is_null());

        assert_eq!(lomae_slice_new(ptr::null(), 2, 2, &mut ptr::null_mut()), LomaeStatus::NullPointer);
        let data = [0f32; 4];
        let mut s = ptr::null_mut();
        assert_eq!(lomae_slice_new(data.as_ptr(), 2, 2, &mut s), LomaeStatus::Ok);
        assert_eq!(last_error(), "");
        let mut small = [0f32; 3];
        assert_eq!(lomae_slice_copy(s, small.as_mut_ptr(), 3), LomaeStatus::Shape);

        let preset = CString::new("desk_swinir").unwrap();
        assert_eq!(lomae_model_build(preset.as_ptr(), 0, &mut model), LomaeStatus::Ok);
        let mut y = ptr::null_mut();
        assert_eq!(lomae_model_forward(model, s, &mut y), LomaeStatus::Shape);
        let missing = CString::new("/nonexistent/ckpt").unwrap();
        let mut m2 = ptr::null_mut();
        assert_eq!(lomae_model_load(missing.as_ptr(), &mut m2), LomaeStatus::Io);
        lomae_slice_free(s);
        lomae_model_free(model);
        lomae_model_free(ptr::null_mut());
    }
}

#[test]
fn checkpoint_round_trip_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let preset = CString::new("desk_sunet").unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(lomae_model_build(preset.as_ptr(), 4, &mut model), LomaeStatus::Ok);
        let path = CString::new(dir.path().join("ck").to_str().unwrap()).unwrap();
        assert_eq!(lomae_model_save(model, path.as_ptr(), 1), LomaeStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(lomae_model_load(path.as_ptr(), &mut back), LomaeStatus::Ok, "{}", last_error());
        let data: Vec<f32> = (0..64 * 64).map(|i| (i % 97) as f32 / 97.0).collect();
        let mut x = ptr::null_mut();
        assert_eq!(lomae_slice_new(data.as_ptr(), 64, 64, &mut x), LomaeStatus::Ok);
        let (mut y1, mut y2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(lomae_model_forward(model, x, &mut y1), LomaeStatus::Ok);
        assert_eq!(lomae_model_forward(back, x, &mut y2), LomaeStatus::Ok);
        let (mut a, mut b) = (vec![0f32; 4096], vec![0f32; 4096]);
        lomae_slice_copy(y1, a.as_mut_ptr(), 4096);
        lomae_slice_copy(y2, b.as_mut_ptr(), 4096);
        assert_eq!(a, b);
        for s in [x, y1, y2] {
            lomae_slice_free(s);
        }
        lomae_model_free(model);
        lomae_model_free(back);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/lomae.h")).unwrap();
    for name in [
        "lomae_last_error",
        "lomae_model_build",
        "lomae_model_forward",
        "lomae_simulate_pair",
        "LOMAE_STATUS_NULL_POINTER",
        "typedef struct LomaeModel LomaeModel",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
