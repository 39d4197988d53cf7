mod common;

use proptest::prelude::*;

use swarmplan::geom::Vec3;
use swarmplan::grid_world::{raster_segment, Cuboid, GridMap};
use swarmplan::hierarchy::{ancestor, build_pyramid, Corridor};
use swarmplan::planner::{evaluate_path, PlannerConfig};
use swarmplan::rng;
use swarmplan::smoothing::catmull_rom;

use common::*;

fn point(lim: f64) -> impl Strategy<Value = Vec3> {
    (0.0..lim, 0.0..lim, 0.0..lim).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn cuboids(n: usize) -> impl Strategy<Value = Vec<Cuboid>> {
    prop::collection::vec(((0i64..8, 0i64..8, 0i64..8), (0i64..3, 0i64..3, 0i64..3)), 0..n).prop_map(|v| {
        v.into_iter()
            .map(|((x, y, z), (dx, dy, dz))| {
                Cuboid::new([x, y, z], [(x + dx).min(7), (y + dy).min(7), (z + dz).min(7)])
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn raster_is_a_face_connected_walk(a in point(16.0), b in point(16.0)) {
        let cells = raster_segment(a, b);
        prop_assert_eq!(cells[0], a.cell());
        prop_assert_eq!(*cells.last().unwrap(), b.cell());
        for w in cells.windows(2) {
            let steps: i64 = (0..3).map(|k| (w[1][k] - w[0][k]).abs()).sum();
            prop_assert_eq!(steps, 1);
        }
    }

    #[test]
    fn raster_matches_box_intersection(a in point(8.0), b in point(8.0)) {
        // Segments that only graze an edge or corner have no well-defined cell order.
        prop_assume!(resolvable(a, b, 1e-6));
        let want: Vec<_> = crossed_cells(a, b).into_iter().map(|(c, _, _)| c).collect();
        prop_assert_eq!(raster_segment(a, b), want);
    }

    #[test]
    fn path_cost_matches_oracle(
        fro in cuboids(8),
        pts in prop::collection::vec(point(8.0), 2..7),
    ) {
        let map = GridMap::with_static([8, 8, 8], Vec::new(), fro);
        let cfg = PlannerConfig::default();
        let target = *pts.last().unwrap();
        let got = evaluate_path(&map, 1.0, &pts, target, &cfg).breakdown;
        let want = oracle_cost(&map, &pts, target, &cfg);
        prop_assert_eq!(got.total, want.total);
        prop_assert_eq!(got.c_turns, want.turns);
    }

    #[test]
    fn spline_matches_basis_matrix(pts in prop::collection::vec(point(64.0), 2..8), sps in 1usize..12) {
        let smooth = catmull_rom(&pts, sps);
        let n = pts.len();
        prop_assert_eq!(smooth.samples.len(), (n - 1) * sps + 1);
        prop_assert_eq!(smooth.samples[0], pts[0]);
        prop_assert_eq!(*smooth.samples.last().unwrap(), pts[n - 1]);
        let at = |i: isize| pts[i.clamp(0, n as isize - 1) as usize];
        // 0.5 * [t^3 t^2 t 1] * M * [p0 p1 p2 p3]^T with the standard basis matrix.
        let m = [[-1.0, 3.0, -3.0, 1.0], [2.0, -5.0, 4.0, -1.0], [-1.0, 0.0, 1.0, 0.0], [0.0, 2.0, 0.0, 0.0]];
        for k in 0..n - 1 {
            let ctrl = [at(k as isize - 1), at(k as isize), at(k as isize + 1), at(k as isize + 2)];
            for s in 0..sps {
                let t = s as f64 / sps as f64;
                let tv = [t * t * t, t * t, t, 1.0];
                let mut want = Vec3::ZERO;
                for (j, c) in ctrl.iter().enumerate() {
                    let w: f64 = (0..4).map(|r| tv[r] * m[r][j]).sum::<f64>() * 0.5;
                    want += *c * w;
                }
                let got = smooth.samples[k * sps + s];
                prop_assert!(got.distance(want) <= 1e-9, "{:?} vs {:?}", got, want);
            }
        }
    }

    #[test]
    fn pyramid_levels_are_block_unions(seed in any::<u64>(), p in 0.0f64..0.4) {
        let base = random_grid(&mut rng::stream(seed, &[]), [16, 16, 16], p);
        let pyramid = build_pyramid(&base, 3).unwrap();
        for k in 0..3 {
            prop_assert_eq!(&pyramid.levels[k], &brute_force_level(&base, k));
        }
    }

    #[test]
    fn corridor_covers_its_path(pts in prop::collection::vec(point(32.0), 2..6), level in 1usize..3, radius in 1i64..3) {
        let dims = [32usize >> level; 3];
        let corridor = Corridor::from_path(&pts, level, dims, radius);
        for w in pts.windows(2) {
            for c in raster_segment(w[0], w[1]) {
                prop_assert!(corridor.allows(c, 0));
                prop_assert!(corridor.allows(ancestor(c, 1), 1));
            }
        }
    }
}
