use lidar_adv::Error;
use lidar_adv::geometry::{laplacian_loss, make_primitive, parse_obj, obj_string, PrimitiveKind, TriangleMesh, Vec3};
use lidar_adv::lidar_sim::{intersect, intersect_brute_force, render_scene, CloudPoint, PointCloud};
use lidar_adv::workbench::{benign_cube, ground_pose, Environment, EnvironmentConfig};
use proptest::prelude::*;
use std::collections::HashMap;

fn kind_strategy() -> impl Strategy<Value = PrimitiveKind> {
    prop_oneof![
        Just(PrimitiveKind::Cube),
        Just(PrimitiveKind::Sphere),
        Just(PrimitiveKind::Tetrahedron),
        Just(PrimitiveKind::Cylinder),
    ]
}

fn edge_face_counts(mesh: &TriangleMesh) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::new();
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

#[test]
fn every_kind_reaches_some_counts_closed() {
    for kind in [PrimitiveKind::Cube, PrimitiveKind::Sphere, PrimitiveKind::Tetrahedron, PrimitiveKind::Cylinder] {
        let closed = (40..400)
            .filter_map(|t| make_primitive(kind, 0.5, t).ok())
            .filter(|m| edge_face_counts(m).values().all(|&n| n == 2))
            .count();
        assert!(closed >= 20, "{kind:?}: {closed}");
    }
}

fn env() -> Environment {
    Environment::build(&EnvironmentConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn primitives_are_closed(kind in kind_strategy(), size in 0.2f64..1.0, target in 40usize..400) {
        // Some counts have no uniform resampling within tolerance.
        match make_primitive(kind, size, target) {
            Ok(mesh) => prop_assert!(edge_face_counts(&mesh).values().all(|&n| n == 2)),
            Err(e) => prop_assert!(matches!(e, Error::InvalidArgument(_)), "{e}"),
        }
    }

    #[test]
    fn laplacian_ignores_uniform_translation(
        seed in any::<u64>(),
        shift in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
    ) {
        use rand::{Rng, SeedableRng};
        let mesh = make_primitive(PrimitiveKind::Sphere, 0.5, 120).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let disp: Vec<Vec3> = (0..mesh.vertex_count())
            .map(|_| Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)))
            .collect();
        let t = Vec3::new(shift.0, shift.1, shift.2);
        let moved: Vec<Vec3> = disp.iter().map(|d| *d + t).collect();
        let a = laplacian_loss(&disp, mesh.adjacency()).0;
        let b = laplacian_loss(&moved, mesh.adjacency()).0;
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn obj_round_trip(kind in kind_strategy(), size in 0.2f64..1.0) {
        let mesh = make_primitive(kind, size, 100).unwrap();
        let back = parse_obj(&obj_string(&mesh)).unwrap();
        prop_assert_eq!(back.vertices(), mesh.vertices());
        prop_assert_eq!(back.faces(), mesh.faces());
    }
}

#[test]
fn foreground_points_lie_on_their_faces() {
    let env = env();
    for (i, kind) in [PrimitiveKind::Cube, PrimitiveKind::Sphere, PrimitiveKind::Tetrahedron].into_iter().enumerate() {
        let mesh = make_primitive(kind, 0.6, 150).unwrap().place(&ground_pose(6.0 + i as f64, 0.4 * i as f64, 17.0 * i as f64));
        let scan = render_scene(&mesh, &env.background, &env.rays, 0.5);
        assert!(!scan.hits.is_empty());
        for (p, hit) in scan.foreground.points.iter().zip(&scan.hits) {
            let f = mesh.faces()[hit.face];
            let v = mesh.vertices();
            let n = (v[f[1]] - v[f[0]]).cross(v[f[2]] - v[f[0]]).normalized().unwrap();
            assert!((p.position - v[f[0]]).dot(n).abs() <= 1e-7);
            assert!(hit.bary.iter().all(|b| *b >= -1e-9 && *b <= 1.0 + 1e-9));
            assert!((hit.bary.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        assert_eq!(env.background.len(), scan.background_kept.len() + scan.occluded_indices.len());
    }
}

#[test]
fn hierarchy_agrees_with_brute_force_on_sensor_rays() {
    let env = env();
    let mesh = benign_cube(386).unwrap().place(&ground_pose(7.3, -0.6, 23.0));
    assert_eq!(intersect(&env.rays, &mesh), intersect_brute_force(&env.rays, &mesh));
}

/// Scaling a convex mesh by `s ≥ 1` about a point on its sensor-facing side
/// yields a superset, so no background point becomes visible again.
#[test]
fn enlarging_never_reduces_occlusion() {
    let env = env();
    let mesh = benign_cube(386).unwrap().place(&ground_pose(8.0, 0.2, 10.0));
    let (lo, hi) = mesh.bounds();
    let pivot = Vec3::new(lo.x, 0.5 * (lo.y + hi.y), lo.z);
    let mut last = 0;
    for s in [1.0, 1.1, 1.3, 1.6, 2.0] {
        let big = mesh.with_vertices(mesh.vertices().iter().map(|v| pivot + (*v - pivot) * s).collect());
        let n = render_scene(&big, &env.background, &env.rays, 0.5).occluded_indices.len();
        assert!(n >= last, "scale {s}: {n} < {last}");
        last = n;
    }
}

#[test]
fn empty_background_keeps_only_object_points() {
    let env = env();
    let mesh = benign_cube(98).unwrap().place(&ground_pose(5.0, 0.0, 0.0));
    let scan = render_scene(&mesh, &PointCloud::new(Vec::<CloudPoint>::new()), &lidar_adv::lidar_sim::RayBundle {
        background: vec![None; env.rays.len()],
        ..env.rays.clone()
    }, 0.5);
    assert!(scan.background_kept.is_empty());
    assert_eq!(scan.foreground.len(), scan.hits.len());
}
