use prosched_web::{offline_allocation, request_probability_curve, tp1_curves};

#[test]
fn allocation_sums_to_packet() {
    let out = offline_allocation(6.0, &[2.0, 0.5, 1.0, 1.5], 0.8).unwrap();
    assert_eq!(out.len(), 5);
    let total: f64 = out[..4].iter().sum();
    assert!((total - 6.0).abs() < 1e-9);
    assert!(out[4] > 0.0);
    assert!(offline_allocation(6.0, &[1.0, 1.0], 1.5).is_err());
}

#[test]
fn equal_gains_split_evenly() {
    let out = offline_allocation(3.0, &[1.0, 1.0, 1.0], 1.0).unwrap();
    for b in &out[..3] {
        assert!((b - 1.0).abs() < 1e-12);
    }
}

#[test]
fn tp1_curves_are_monotone_in_gain() {
    let gains: Vec<f64> = (1..=40).map(|i| i as f64 * 0.1).collect();
    let out = tp1_curves(4.0, 0.7, 1.0, 1.0, 0.001, &gains).unwrap();
    assert_eq!(out.len(), 120);
    for w in out.chunks(3).collect::<Vec<_>>().windows(2) {
        assert!(w[1][1] >= w[0][1] && w[1][2] >= w[0][2]);
    }
    for c in out.chunks(3) {
        assert!((0.0..=4.0).contains(&c[1]) && (0.0..=4.0).contains(&c[2]));
    }
    assert!(tp1_curves(4.0, 0.7, 1.0, 1.0, 0.001, &[0.0]).is_err());
}

#[test]
fn identity_chain_keeps_request_statistic() {
    let curve = request_probability_curve(&[1.0, 0.0, 0.0, 1.0], &[0.3, 0.9], 2, 5).unwrap();
    assert_eq!(curve, vec![0.9; 5]);
    let curve = request_probability_curve(&[0.5, 0.5, 0.5, 0.5], &[0.3, 0.9], 1, 3).unwrap();
    assert!((curve[0] - 0.3).abs() < 1e-12);
    assert!((curve[2] - 0.6).abs() < 1e-12);
    assert!(request_probability_curve(&[1.0, 0.0, 0.0], &[0.3, 0.9], 1, 3).is_err());
    assert!(request_probability_curve(&[1.0, 0.0, 0.0, 1.0], &[0.3, 0.9], 3, 3).is_err());
}
