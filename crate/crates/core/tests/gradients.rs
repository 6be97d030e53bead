mod common;

use common::*;
use lidar_adv::attack::AttackGoal;
use lidar_adv::detector::DetectorParams;
use lidar_adv::features::ProxyConfig;
use lidar_adv::workbench::{benign_cube, ground_pose, Environment, EnvironmentConfig};

#[test]
fn regularizer_gradients() {
    let c = check_regularizers(11, 120);
    assert!(c.passes(1e-5, 100), "{c:?}");
}

#[test]
fn hit_point_gradients() {
    let c = check_hit_backward(12, 120);
    assert!(c.passes(1e-4, 100), "{c:?}");
}

#[test]
fn trilinear_soft_count_gradients() {
    let c = check_soft_count(&ProxyConfig::trilinear(), 13, 120);
    assert!(c.passes(1e-4, 100), "{c:?}");
}

#[test]
fn tanh_soft_count_gradients() {
    let c = check_soft_count(&ProxyConfig::tanh(), 14, 120);
    assert!(c.passes(1e-4, 100), "{c:?}");
}

#[test]
fn soft_feature_gradients() {
    let c = check_soft_features(15, 120);
    assert!(c.passes(1e-4, 100), "{c:?}");
}

#[test]
fn detector_input_gradients() {
    let c = check_detector_backward(16, 120);
    assert!(c.passes(1e-4, 100), "{c:?}");
}

#[test]
fn attack_objective_gradient() {
    let env = Environment::build(&EnvironmentConfig::default()).unwrap();
    let scene = env.attack_scene(DetectorParams::init(4, 3));
    let cube = benign_cube(386).unwrap();
    let poses = [ground_pose(7.9, 0.1, -1.5), ground_pose(8.2, -0.3, 3.0)];
    for goal in [AttackGoal::Hide, AttackGoal::Relabel { source: 0, target: 1 }] {
        let c = check_total_loss(&cube, &poses, &scene, &goal, 0.01, 17, 10);
        assert!(c.passes(5e-3, 20), "{goal:?}: {c:?}");
    }
}

#[test]
fn interpolated_soft_count_gradients() {
    let c = check_soft_count(&ProxyConfig::default(), 18, 120);
    assert!(c.passes(1e-4, 100), "{c:?}");
}
