//! Field-level checks for the five damage generators: noise-free analytic
//! examples, footprint containment, determinism, and sampling behavior.

use crumple_core::damage::{
    broken_lamp_factors, chunk_center, crack_factor, damage_label, dent_displace, mix,
    sample_damage_plan, sample_damage_plan_for_type, scratch_factor, secondary_damage_chain,
    shatter_factor, shatter_rings, AppliedDamage, CompatibilityMatrix, DamageError, DamageSpec,
    DamageType, ParameterRanges, Span, ALL_DAMAGE_TYPES,
};
use crumple_core::math::Vec3;
use crumple_core::mesh::{DamageCandidate, MaterialClass, PartRegistry};
use crumple_core::procgen::{toy_car, uv_sphere};
use crumple_core::rng::{splitmix64, unit_f64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

fn noise_free(dtype: DamageType) -> DamageSpec {
    let mut spec = DamageSpec {
        dtype,
        seed: 7,
        ..DamageSpec::default()
    };
    spec.noise.radius.amplitude = 0.0;
    spec.noise.crumple.amplitude = 0.0;
    spec.noise.deviation.amplitude = 0.0;
    spec.noise.line_jitter = 0.0;
    spec
}

fn scatter(n: usize, extent: f64, salt: u64) -> Vec<Vec3> {
    let mut state = salt;
    (0..n)
        .map(|_| {
            let mut next = || {
                state = splitmix64(state);
                (unit_f64(state) - 0.5) * 2.0 * extent
            };
            Vec3::new(next(), next(), next())
        })
        .collect()
}

#[test]
fn dent_follows_the_cosine_bell_and_preserves_the_rest() {
    let registry = PartRegistry::builtin();
    let sphere = uv_sphere(&registry, "hood", 24, 48, 2.0).unwrap();
    let mut spec = noise_free(DamageType::Dent);
    spec.center = Vec3::Z * 2.0;
    spec.center_normal = Vec3::Z;
    spec.area = 0.5;
    spec.depth = 0.12;
    let ctx = spec.context();

    let dented = dent_displace(&sphere, &spec, &ctx).unwrap();
    assert_eq!(dented.vertices.len(), sphere.vertices.len());
    let mut inside = 0;
    for (before, after) in sphere.vertices.iter().zip(&dented.vertices) {
        let r = (*before - spec.center).length();
        if r < spec.area {
            inside += 1;
            let profile = spec.depth * (1.0 + (PI * r / spec.area).cos()) * 0.5;
            let expected = *before - before.normalized() * profile;
            assert!(
                (*after - expected).length() < 1e-12,
                "dent profile mismatch at r = {r}"
            );
        } else {
            assert_eq!(
                before.to_array().map(f64::to_bits),
                after.to_array().map(f64::to_bits),
                "vertex outside the footprint moved"
            );
        }
    }
    assert!(inside > 10, "footprint covered only {inside} vertices");

    let pole = dented.vertices[0];
    assert!((pole - Vec3::Z * (2.0 - spec.depth)).length() < 1e-12);

    let again = dent_displace(&sphere, &spec, &ctx).unwrap();
    assert_eq!(dented, again);
}

#[test]
fn scratch_is_a_striped_disc() {
    let mut spec = noise_free(DamageType::Scratch);
    spec.center = Vec3::ZERO;
    spec.area = 0.3;
    spec.noise.wave.scale = 20.0;
    spec.noise.wave.distortion = 0.0;
    let ctx = spec.context();

    let peak = Vec3::new(1.0 / 80.0, 0.0, 0.0);
    assert_eq!(scratch_factor(peak, &spec, &ctx).unwrap(), 1.0);
    let outside = Vec3::new(0.0, 0.31, 0.0);
    assert_eq!(scratch_factor(outside, &spec, &ctx).unwrap(), 0.0);

    // Walking through the disc along the stripe axis crosses several
    // disjoint bands of intensity above one half.
    let mut bands = 0;
    let mut in_band = false;
    for i in -3000..=3000 {
        let x = Vec3::new(i as f64 * 1e-4, 0.0, 0.0);
        let hot = scratch_factor(x, &spec, &ctx).unwrap() > 0.5;
        if hot && !in_band {
            bands += 1;
        }
        in_band = hot;
    }
    assert!(bands >= 3, "only {bands} stripe bands inside the disc");

    let wrong = shatter_factor(peak, &spec, &ctx);
    assert!(matches!(wrong, Err(DamageError::WrongType { .. })));
}

#[test]
fn crack_fades_over_the_footprint_around_the_coordinate_diagonal() {
    let mut spec = noise_free(DamageType::Crack);
    spec.center = Vec3::new(0.5, 0.5, 1.0);
    spec.area = 0.4;
    spec.line_width = 0.02;
    let ctx = spec.context();

    assert_eq!(crack_factor(spec.center, &spec, &ctx).unwrap(), 1.0);
    let half_region = spec.center + Vec3::Z * (spec.area * 0.5);
    assert!((crack_factor(half_region, &spec, &ctx).unwrap() - 0.5).abs() < 1e-12);
    let half_line = spec.center + Vec3::new(spec.line_width * 0.5, 0.0, 0.0);
    let expected = 0.5 * (1.0 - (half_line - spec.center).length() / spec.area);
    assert!((crack_factor(half_line, &spec, &ctx).unwrap() - expected).abs() < 1e-12);
    let off_line = spec.center + Vec3::new(spec.line_width, 0.0, 0.0);
    assert_eq!(crack_factor(off_line, &spec, &ctx).unwrap(), 0.0);
    let outside = spec.center + Vec3::Z * (spec.area + 1e-9);
    assert_eq!(crack_factor(outside, &spec, &ctx).unwrap(), 0.0);
}

#[test]
fn shatter_marks_rings_and_radial_lines() {
    let mut spec = noise_free(DamageType::GlassShatter);
    spec.center = Vec3::new(0.2, -0.4, 1.5);
    spec.center_normal = Vec3::Z;
    spec.area = 0.3;
    spec.ring_scale = 40.0;
    spec.thickness = 0.1;
    spec.line_count = 8;
    let ctx = spec.context();
    let (u, v) = spec.tangent_basis();

    assert!(shatter_factor(spec.center, &spec, &ctx).unwrap());
    let first_ring = spec.center + u * (PI / spec.ring_scale);
    assert!(shatter_rings(first_ring, &spec, &ctx));

    // Between rings and between radial lines nothing is marked.
    let gap_radius = 0.25;
    assert!((spec.ring_scale * gap_radius).sin().abs() > spec.thickness);
    let mid_angle = TAU * 0.5 / spec.line_count as f64;
    let gap = spec.center + (u * mid_angle.cos() + v * mid_angle.sin()) * gap_radius;
    assert!(!shatter_factor(gap, &spec, &ctx).unwrap());

    let outside = spec.center + u * (spec.area + 0.01);
    assert!(!shatter_factor(outside, &spec, &ctx).unwrap());

    // Sweeping a full turn just inside the rim crosses every radial line;
    // runs are counted circularly so the wrap angle is not double counted.
    let sweep_radius = gap_radius;
    let steps = 4000;
    let hits: Vec<bool> = (0..steps)
        .map(|i| {
            let angle = TAU * i as f64 / steps as f64;
            let x = spec.center + (u * angle.cos() + v * angle.sin()) * sweep_radius;
            ctx.noisy_periodic(
                ctx.radial_gradient(x, spec.center, u, v),
                spec.line_count,
                spec.noise.line_jitter,
            ) * sweep_radius
                < spec.thickness
        })
        .collect();
    let lines = (0..steps)
        .filter(|&i| hits[i] && !hits[(i + steps - 1) % steps])
        .count();
    assert_eq!(lines as u32, spec.line_count, "radial line count mismatch");
}

#[test]
fn broken_lamp_cuts_a_chunk_and_webs_the_face() {
    let mut spec = noise_free(DamageType::BrokenLamp);
    spec.center = Vec3::new(1.0, 0.2, 0.3);
    spec.area = 0.08;
    spec.thickness = 0.1;
    spec.fracture_extent = 0.25;
    let ctx = spec.context();

    let chunk = chunk_center(&spec, &ctx);
    assert!(
        (chunk - spec.center).length() <= 0.5 * spec.area + 1e-12,
        "chunk center strayed from the impact point"
    );
    let at_chunk = broken_lamp_factors(chunk, &spec, &ctx).unwrap();
    assert!(at_chunk.chunk);
    let beyond = broken_lamp_factors(spec.center + Vec3::X * 0.5, &spec, &ctx).unwrap();
    assert!(!beyond.chunk && !beyond.fracture);

    // A permissive web threshold fractures the whole extent; the scaled
    // nearest-feature distance never reaches 2.
    let mut wide = spec;
    wide.thickness = 2.0;
    for x in scatter(200, spec.fracture_extent * 0.57, 3) {
        let f = broken_lamp_factors(spec.center + x, &spec, &ctx).unwrap();
        let w = broken_lamp_factors(spec.center + x, &wide, &ctx).unwrap();
        assert!(w.fracture, "wide threshold must web the whole extent");
        if f.fracture {
            assert!(w.fracture);
        }
    }
}

#[test]
fn labels_stay_inside_the_declared_reach() {
    for dtype in ALL_DAMAGE_TYPES {
        let spec = DamageSpec {
            dtype,
            center: Vec3::new(0.3, -0.2, 0.9),
            seed: 2024,
            ..DamageSpec::default()
        };
        let applied = AppliedDamage::new(spec);
        let reach = spec.max_extent();
        for offset in scatter(10_000, reach * 2.0, dtype.code() as u64) {
            let x = spec.center + offset;
            if applied.label_indicator(x) {
                assert!(
                    (x - spec.center).length() <= reach + 1e-9,
                    "{dtype} labeled a point {} beyond its reach {reach}",
                    (x - spec.center).length()
                );
            }
        }
        // Dense sampling close to the impact point must find labeled
        // surface; cracks label only a thin line, hence the large count.
        let labeled = scatter(50_000, reach * 0.15, 77 + dtype.code() as u64)
            .iter()
            .any(|o| applied.label_indicator(spec.center + *o));
        assert!(labeled, "{dtype} labeled nothing near its center");
    }
}

#[test]
fn label_codes_fixed_and_first_indicator_wins() {
    for (dtype, code) in ALL_DAMAGE_TYPES.iter().zip(1u8..) {
        assert_eq!(dtype.code(), code);
        assert_eq!(DamageType::from_code(code), Some(*dtype));
    }
    assert_eq!(DamageType::from_code(0), None);
    assert_eq!(DamageType::from_code(6), None);

    assert_eq!(damage_label(Vec3::ZERO, &[]), 0);

    let mut dent = noise_free(DamageType::Dent);
    dent.center = Vec3::ZERO;
    assert_eq!(
        damage_label(Vec3::ZERO, &[AppliedDamage::new(dent)]),
        DamageType::Dent.code()
    );

    // A scratch and a crack that both indicate at the same point: the
    // earlier damage in application order owns the label.
    let mut scratch = noise_free(DamageType::Scratch);
    scratch.noise.wave.distortion = 0.0;
    scratch.noise.wave.scale = 20.0;
    scratch.center = Vec3::new(1.0 / 80.0, 0.0, 0.0);
    let mut crack = noise_free(DamageType::Crack);
    crack.center = scratch.center;
    crack.line_width = 0.5;
    let s = AppliedDamage::new(scratch);
    let c = AppliedDamage::new(crack);
    assert!(s.label_indicator(scratch.center) && c.label_indicator(scratch.center));
    assert_eq!(
        damage_label(scratch.center, &[s, c]),
        DamageType::Scratch.code()
    );
    assert_eq!(
        damage_label(scratch.center, &[c, s]),
        DamageType::Crack.code()
    );
}

#[test]
fn plans_respect_material_compatibility() {
    let registry = PartRegistry::builtin();
    let car = toy_car(&registry).unwrap();
    let compat = CompatibilityMatrix::default();
    let ranges = ParameterRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let plan = sample_damage_plan(&car, &registry, &compat, &ranges, &mut rng).unwrap();
        let material = car.material_of_part(plan.part_id).unwrap();
        assert!(
            compat.allows(material, plan.spec.dtype),
            "{:?} planned on {material:?}",
            plan.spec.dtype
        );
        let vertex_hits = car
            .part_vertices(plan.part_id)
            .iter()
            .any(|&v| car.vertices[v as usize] == plan.spec.center);
        assert!(vertex_hits, "impact point is not a vertex of the part");
    }
}

#[test]
fn glass_only_meshes_always_shatter() {
    let registry = PartRegistry::builtin();
    let glass = uv_sphere(&registry, "windshield", 8, 16, 1.0).unwrap();
    assert_eq!(
        glass.material_of_part(glass.present_parts().next().unwrap()),
        Some(MaterialClass::Glass)
    );
    let compat = CompatibilityMatrix::default();
    let ranges = ParameterRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let plan = sample_damage_plan(&glass, &registry, &compat, &ranges, &mut rng).unwrap();
        assert_eq!(plan.spec.dtype, DamageType::GlassShatter);
    }
    let err = sample_damage_plan_for_type(&glass, &compat, &ranges, DamageType::Dent, &mut rng);
    assert!(matches!(err, Err(DamageError::NoPartForType(_))));
}

#[test]
fn degenerate_ranges_pin_every_parameter() {
    let registry = PartRegistry::builtin();
    let car = toy_car(&registry).unwrap();
    let compat = CompatibilityMatrix::default();
    let mut ranges = ParameterRanges::default();
    ranges.shatter.area = Span(0.42, 0.42);
    ranges.shatter.ring_scale = Span(33.0, 33.0);
    ranges.shatter.thickness = Span(0.07, 0.07);
    ranges.shatter.line_count_min = 9;
    ranges.shatter.line_count_max = 9;
    ranges.shatter.line_jitter = Span(0.25, 0.25);
    ranges.shatter.crumple_scale = Span(5.0, 5.0);
    ranges.shatter.crumple_amplitude = Span(0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let plan = sample_damage_plan_for_type(
            &car,
            &compat,
            &ranges,
            DamageType::GlassShatter,
            &mut rng,
        )
        .unwrap();
        assert_eq!(plan.spec.area, 0.42);
        assert_eq!(plan.spec.ring_scale, 33.0);
        assert_eq!(plan.spec.thickness, 0.07);
        assert_eq!(plan.spec.line_count, 9);
        assert_eq!(plan.spec.noise.line_jitter, 0.25);
        assert_eq!(plan.spec.noise.crumple.scale, 5.0);
        assert_eq!(plan.spec.noise.crumple.amplitude, 0.0);
    }

    ranges.shatter.area = Span(0.5, 0.4);
    assert!(ranges.validate().is_err());
}

#[test]
fn follow_up_chains_draw_only_from_the_candidates() {
    let registry = PartRegistry::builtin();
    let glass = uv_sphere(&registry, "windshield", 8, 16, 1.0).unwrap();
    let compat = CompatibilityMatrix::default();
    let ranges = ParameterRanges::default();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let chain = secondary_damage_chain(&glass, &[], &compat, &ranges, &mut rng);
        assert!(chain.is_empty(), "no candidates must mean no follow-ups");
    }

    let part_id = glass.present_parts().next().unwrap();
    let candidates: Vec<DamageCandidate> = glass
        .part_vertices(part_id)
        .iter()
        .map(|&vertex| DamageCandidate {
            vertex,
            part_id,
            material: MaterialClass::Glass,
        })
        .collect();
    let mut saw_follow_up = false;
    for _ in 0..500 {
        let chain = secondary_damage_chain(&glass, &candidates, &compat, &ranges, &mut rng);
        for spec in &chain {
            saw_follow_up = true;
            assert_eq!(spec.dtype, DamageType::GlassShatter);
            let on_vertex = candidates
                .iter()
                .any(|c| glass.vertices[c.vertex as usize] == spec.center);
            assert!(on_vertex, "follow-up center is not a candidate vertex");
        }
    }
    assert!(saw_follow_up);
}

proptest! {
    #[test]
    fn mix_blends_componentwise(p in 0.0f64..=1.0, a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let m = mix(p, &a, &b).unwrap();
        prop_assert!((m - (p * a + (1.0 - p) * b)).abs() < 1e-12);

        let va = Vec3::new(a, b, a - b);
        let vb = Vec3::new(b, a, a + b);
        let vm = mix(p, &va, &vb).unwrap();
        for i in 0..3 {
            let want = p * va.to_array()[i] + (1.0 - p) * vb.to_array()[i];
            prop_assert!((vm.to_array()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mix_rejects_factors_outside_the_unit_interval(p in prop_oneof![-10.0f64..-1e-9, 1.0 + 1e-9..10.0]) {
        prop_assert!(matches!(
            mix(p, &1.0, &2.0),
            Err(DamageError::MixFactorOutOfRange(_))
        ));
    }
}
