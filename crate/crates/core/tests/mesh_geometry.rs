use std::f64::consts::PI;

use proptest::prelude::*;

use pdmanifold::mesh::{self, Mesh};
use pdmanifold::Vec3;

fn bumpy(level: u32, factors: &[f64]) -> Mesh {
    let base = mesh::generate_icosphere(level, 1.0).unwrap();
    let positions = base
        .positions()
        .iter()
        .zip(factors.iter().cycle())
        .map(|(x, f)| x * *f)
        .collect();
    Mesh::new(positions, base.triangles().to_vec()).unwrap()
}

#[test]
fn icosphere_counts_follow_subdivision_recurrence() {
    let (mut v, mut e, mut f) = (12usize, 30usize, 20usize);
    for level in 0..=4 {
        let m = mesh::generate_icosphere(level, 1.0).unwrap();
        assert_eq!((m.num_vertices(), m.num_edges(), m.num_triangles()), (v, e, f), "level {level}");
        assert_eq!(m.euler_characteristic(), 2);
        (v, e, f) = (v + e, 2 * e + 3 * f, 4 * f);
    }
}

#[test]
fn level_three_matches_reference_sphere() {
    let m = mesh::generate_icosphere(3, 1.0).unwrap();
    assert_eq!((m.num_vertices(), m.num_edges(), m.num_triangles()), (642, 1920, 1280));

    // Oracle: the same triangles' areas summed independently of the lumping.
    let exact: f64 = m
        .triangles()
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| m.positions()[i]);
            0.5 * (b - a).cross(&(c - a)).norm()
        })
        .sum();
    let lumped: f64 = m.vertex_areas().iter().sum();
    assert!((lumped - exact).abs() <= 1e-12 * exact);
    assert!(exact < 4.0 * PI && exact > 0.98 * 4.0 * PI);
}

#[test]
fn poles_sit_on_the_z_axis() {
    for level in 0..=3 {
        let m = mesh::generate_icosphere(level, 1.5).unwrap();
        for pole in [Vec3::new(0.0, 0.0, 1.5), Vec3::new(0.0, 0.0, -1.5)] {
            assert!(m.positions().iter().any(|x| (x - pole).norm() < 1e-12), "level {level}");
        }
    }
}

#[test]
fn off_round_trip_preserves_topology_and_areas() {
    let m = mesh::generate_icosphere(2, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sphere.off");
    mesh::write_off(&m, &path).unwrap();
    let back = mesh::load_off(&path).unwrap();
    assert_eq!(back.triangles(), m.triangles());
    assert_eq!(back.edges(), m.edges());
    for (a, b) in back.vertex_areas().iter().zip(m.vertex_areas()) {
        assert!((a - b).abs() <= 1e-15);
    }
}

#[test]
fn off_with_third_face_on_an_edge_is_rejected() {
    let text = "OFF\n5 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n1 1 1\n3 0 1 2\n3 0 1 3\n3 0 1 4\n3 1 2 3\n";
    assert!(matches!(mesh::parse_off(text), Err(pdmanifold::Error::Topology(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn areas_are_translation_invariant(
        factors in proptest::collection::vec(0.8f64..1.2, 42),
        offset in proptest::array::uniform3(-10.0f64..10.0),
    ) {
        let m = bumpy(1, &factors);
        let shift = Vec3::from(offset);
        let moved = m.translated(shift).unwrap();
        for (a, b) in m.vertex_areas().iter().zip(moved.vertex_areas()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-3));
        }
        let disp: Vec<Vec3> = m.positions().iter().map(|x| x * 0.05).collect();
        let s0 = mesh::deformed_area(&m, &disp);
        let s1 = mesh::deformed_area(&moved, &disp);
        prop_assert!((s0 - s1).abs() <= 1e-12 * s0);
    }

    #[test]
    fn areas_scale_quadratically(
        factors in proptest::collection::vec(0.8f64..1.2, 42),
        lambda in 0.1f64..10.0,
    ) {
        let m = bumpy(1, &factors);
        let scaled = m.scaled(lambda).unwrap();
        for (a, b) in m.vertex_areas().iter().zip(scaled.vertex_areas()) {
            prop_assert!((b - lambda * lambda * a).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn edge_extraction_is_idempotent(factors in proptest::collection::vec(0.8f64..1.2, 162)) {
        let m = bumpy(2, &factors);
        let rebuilt = Mesh::new(m.positions().to_vec(), m.triangles().to_vec()).unwrap();
        prop_assert_eq!(rebuilt.edges(), m.edges());
        prop_assert_eq!(rebuilt.num_edges(), 480);
    }
}
