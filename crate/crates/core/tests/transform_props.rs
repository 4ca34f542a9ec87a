//! Structural properties of the transforms and the default suite.

use proptest::prelude::*;
use stressbench::perturb::{
    self, adjust_brightness, adjust_contrast, adjust_gamma, adjust_sharpness, build_suite,
    contact_sheet, default_suite, gaussian_blur, parse_tag, PerturbationKind, PerturbationSpec,
    SeverityTable, SuiteConfig,
};
use stressbench::ImageBuffer;

fn image() -> impl Strategy<Value = ImageBuffer> {
    (prop_oneof![Just(1usize), Just(3usize)], 1usize..12, 1usize..12).prop_flat_map(|(c, h, w)| {
        prop::collection::vec(0.0f32..=1.0, c * h * w)
            .prop_map(move |px| ImageBuffer::new(c, h, w, px).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_spec_keeps_shape_and_range(img in image()) {
        for spec in default_suite() {
            let out = perturb::apply(&spec, &img).unwrap();
            prop_assert_eq!(
                (out.channels(), out.height(), out.width()),
                (img.channels(), img.height(), img.width())
            );
            prop_assert!(out.pixels().iter().all(|p| (0.0..=1.0).contains(p)), "{}", spec.tag());
        }
    }

    #[test]
    fn neutral_parameters_are_identity(img in image()) {
        prop_assert_eq!(&adjust_brightness(&img, 1.0).unwrap(), &img);
        prop_assert_eq!(&adjust_contrast(&img, 1.0).unwrap(), &img);
        prop_assert_eq!(&adjust_sharpness(&img, 1.0).unwrap(), &img);
        let g = adjust_gamma(&img, 1.0, 1.0).unwrap();
        for (a, b) in g.pixels().iter().zip(img.pixels()) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn brightness_and_gamma_are_pixelwise_monotone(img in image(), level in 1i32..=3) {
        let table = SeverityTable::default();
        for kind in [PerturbationKind::Brightness, PerturbationKind::Gamma] {
            let lo = perturb::apply(&PerturbationSpec::new(kind, -level, &table).unwrap(), &img).unwrap();
            let hi = perturb::apply(&PerturbationSpec::new(kind, level, &table).unwrap(), &img).unwrap();
            for ((l, h), p) in lo.pixels().iter().zip(hi.pixels()).zip(img.pixels()) {
                match kind {
                    // brightness scales, so higher levels brighten
                    PerturbationKind::Brightness => prop_assert!(l <= p && p <= h),
                    // gamma raises to a power, so higher levels darken
                    _ => prop_assert!(h <= p && p <= l),
                }
            }
        }
    }

    #[test]
    fn constant_images_survive_blur_and_sharpness(
        c in prop_oneof![Just(1usize), Just(3usize)],
        h in 1usize..10,
        w in 1usize..10,
        v in 0.0f32..=1.0,
        sigma in 0.1f32..4.0,
    ) {
        let img = ImageBuffer::filled(c, h, w, v).unwrap();
        for out in [gaussian_blur(&img, sigma).unwrap(), adjust_sharpness(&img, 4.0).unwrap()] {
            prop_assert!(out.pixels().iter().all(|p| (p - v).abs() <= 1e-6));
        }
    }
}

#[test]
fn default_suite_has_thirty_specs() {
    let suite = default_suite();
    assert_eq!(suite.len(), 30);
    for kind in PerturbationKind::ALL {
        let levels: Vec<i32> = suite.iter().filter(|s| s.kind == kind).map(|s| s.level).collect();
        let want: Vec<i32> = if kind == PerturbationKind::Blur {
            (1..=6).collect()
        } else {
            vec![-3, -2, -1, 1, 2, 3]
        };
        assert_eq!(levels, want, "{kind}");
    }
    assert_eq!(build_suite(&SuiteConfig::default()).unwrap(), suite);
    for spec in &suite {
        assert_eq!(parse_tag(&spec.tag()).unwrap(), (spec.kind, spec.level));
    }
}

#[test]
fn severities_follow_the_schedule() {
    let table = SeverityTable::default();
    let p = |kind, level| PerturbationSpec::new(kind, level, &table).unwrap().parameter;
    let cases = [
        (PerturbationKind::Gamma, 2, 2.25),
        (PerturbationKind::Contrast, -1, 1.0 / 1.4),
        (PerturbationKind::Brightness, 3, 2.197),
        (PerturbationKind::Sharpness, -3, 0.125),
        (PerturbationKind::Blur, 5, 3.0),
    ];
    for (kind, level, want) in cases {
        assert!((p(kind, level) - want).abs() < 1e-12, "{kind} {level}");
    }
    assert!(PerturbationSpec::new(PerturbationKind::Gamma, 0, &table).is_err());
    assert!(PerturbationSpec::new(PerturbationKind::Blur, -1, &table).is_err());
    assert!(PerturbationSpec::new(PerturbationKind::Contrast, 4, &table).is_err());
}

#[test]
fn contact_sheet_has_one_tile_per_spec() {
    let img = ImageBuffer::filled(3, 20, 30, 0.5).unwrap();
    let suite = default_suite();
    let (sheet, tiles) = contact_sheet(&img, &suite, 6, 32).unwrap();
    assert_eq!(tiles.len(), 30);
    assert_eq!(tiles.iter().map(|t| t.row).max(), Some(4));
    assert!(sheet.width() >= 6 * 32 && sheet.height() >= 5 * 21);
}
