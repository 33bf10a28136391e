use vfunc_core::toy::{run_bounds_check, BoundsCheckConfig, ToyJoint};

#[test]
fn bounds_check_passes_on_default_joint() {
    let joint = ToyJoint::default();
    let report = run_bounds_check(&joint, &BoundsCheckConfig::default()).unwrap();
    let e = report.exact;
    eprintln!("H(f)={:.4} H(f|z)={:.4} H(z|f)={:.4} I={:.4}", e.h_f, e.h_f_given_z, e.h_z_given_f, e.mutual_info);
    for l in &report.lines {
        eprintln!("{:<60} est={:.4} se={:.4} limit={:.4} {}", l.name, l.estimate, l.std_err, l.limit, l.pass);
    }
    assert!(report.passed());
}
