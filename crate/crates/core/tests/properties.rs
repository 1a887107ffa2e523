//! Property tests over randomly drawn inputs.

use proptest::prelude::*;
use railsim_core::geom::Vec3;
use railsim_core::io::kitti::{decode_bin, encode_bin};
use railsim_core::io::stream::{MessageType, StreamDecoder, StreamMessage};
use railsim_core::metrics::{fit_rigid, RigidTransform};
use railsim_core::multitrack::duplicate_main;
use railsim_core::raycast::{cast_brute_force, Accelerator, Ray, DEFAULT_T_MIN};
use railsim_core::routegen::{generate_route, RouteParams};
use railsim_core::sensors::LidarPoint;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn triangle() -> impl Strategy<Value = [Vec3; 3]> {
    (vec3(20.0), vec3(3.0), vec3(3.0), vec3(3.0)).prop_map(|(c, a, b, d)| [c + a, c + b, c + d])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accelerator_agrees_with_brute_force(
        tris in prop::collection::vec(triangle(), 1..300),
        rays in prop::collection::vec((vec3(25.0), vec3(1.0)), 1..40),
    ) {
        let accel = Accelerator::build(&tris);
        for (o, d) in rays {
            prop_assume!(d.norm() > 1e-3);
            let ray = Ray::new(o, d, 100.0);
            let a = accel.cast(&ray);
            let b = cast_brute_force(&tris, &ray, DEFAULT_T_MIN);
            prop_assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a.t - b.t).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn point_cloud_bytes_round_trip(pts in prop::collection::vec((any::<f32>(), any::<f32>(), any::<f32>(), any::<u8>()), 0..200)) {
        let cloud: Vec<LidarPoint> = pts
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite() && p.2.is_finite())
            .map(|&(x, y, z, i)| LidarPoint { x: x as f64, y: y as f64, z: z as f64, intensity: i, class: 0, instance: 0, beam: 0, azimuth: 0 })
            .collect();
        let bytes = encode_bin(&cloud);
        prop_assert_eq!(bytes.len(), 16 * cloud.len());
        let back = decode_bin(&bytes).unwrap();
        for (p, b) in cloud.iter().zip(&back) {
            prop_assert_eq!(b[0] as f64, p.x);
            prop_assert_eq!(b[1] as f64, p.y);
            prop_assert_eq!(b[2] as f64, p.z);
        }
    }

    #[test]
    fn stream_decodes_any_chunking(
        payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..64), 1..6),
        cuts in prop::collection::vec(1usize..40, 1..30),
    ) {
        let msgs: Vec<StreamMessage> = payloads
            .into_iter()
            .enumerate()
            .map(|(k, p)| StreamMessage::new(MessageType::ALL[k % MessageType::ALL.len()], k as u64 * 7, p))
            .collect();
        let bytes: Vec<u8> = msgs.iter().flat_map(|m| m.encode().unwrap()).collect();
        let mut dec = StreamDecoder::default();
        let mut got = Vec::new();
        let mut pos = 0;
        for c in cuts.iter().cycle() {
            if pos >= bytes.len() {
                break;
            }
            let end = (pos + c).min(bytes.len());
            dec.push(&bytes[pos..end]);
            pos = end;
            while let Some(m) = dec.next_message().unwrap() {
                got.push(m);
            }
        }
        prop_assert_eq!(got, msgs);
    }

    #[test]
    fn rigid_fit_recovers_motion(yaw in -30.0f64..30.0, t in vec3(5.0), pts in prop::collection::vec(vec3(30.0), 4..60)) {
        let truth = RigidTransform::from_yaw_deg(yaw, t);
        let dst: Vec<Vec3> = pts.iter().map(|p| truth.apply(p)).collect();
        // Skip near-degenerate draws.
        let c = pts.iter().fold(Vec3::zeros(), |a, p| a + p) / pts.len() as f64;
        let spread = pts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
        prop_assume!(spread > 1.0);
        let fit = fit_rigid(&pts, &dst);
        for (p, q) in pts.iter().zip(&dst) {
            prop_assert!((fit.apply(p) - q).norm() < 1e-6);
        }
        let round = truth.compose(&truth.inverse());
        prop_assert!((round.translation).norm() < 1e-9);
        prop_assert!(round.angle_to_deg(&RigidTransform::identity()) < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn routes_are_evenly_spaced_and_fully_blocked(seed in any::<u64>(), n in 2usize..8) {
        let route = generate_route(seed, &RouteParams { n_blocks: n, ..RouteParams::default() }).unwrap();
        prop_assert_eq!(route.blocks.len(), n);
        prop_assert_eq!(route.blocks[0].start(), 0);
        for w in route.blocks.windows(2) {
            prop_assert_eq!(w[0].end(), w[1].start());
        }
        prop_assert!(route.blocks.last().unwrap().end() + 1 >= route.points.len());
        for w in route.points.windows(2) {
            prop_assert!(((w[1] - w[0]).norm() - route.spacing).abs() < 0.05 * route.spacing);
        }
        let again = generate_route(seed, &RouteParams { n_blocks: n, ..RouteParams::default() }).unwrap();
        prop_assert_eq!(route.points, again.points);
    }

    #[test]
    fn duplicate_track_keeps_its_offset(seed in any::<u64>(), d in 3.5f64..6.0) {
        let route = generate_route(seed, &RouteParams { n_blocks: 4, ..RouteParams::default() }).unwrap();
        let dup = duplicate_main(&route, d).unwrap();
        prop_assert_eq!(dup.points.len(), route.points.len());
        for (p, q) in route.points.iter().zip(&dup.points).skip(1).step_by(7) {
            let h = ((q.x - p.x).powi(2) + (q.y - p.y).powi(2)).sqrt();
            prop_assert!((h - d).abs() < 1e-6, "{h} vs {d}");
        }
    }
}
