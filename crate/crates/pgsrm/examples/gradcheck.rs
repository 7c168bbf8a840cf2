//! Verify the analytic gradients of both training losses against central
//! finite differences on a small policy.
//!
//! ```bash
//! cargo run --example gradcheck
//! ```

fn main() {
    let report = pgsrm::gradcheck::run(0, 2, 1e-4).expect("gradient check runs");
    println!("batches checked      : {}", report.batches);
    println!("parameters checked   : {}", report.parameters_checked);
    println!("max rel error actor  : {:.3e}", report.max_rel_error_actor);
    println!("max rel error critic : {:.3e}", report.max_rel_error_critic);
    println!("tolerance            : {:.1e}", report.tolerance);
    println!("elapsed              : {:.2}s", report.elapsed.as_secs_f64());
    println!("result               : {}", if report.passed() { "PASS" } else { "FAIL" });
    assert!(report.passed());
}
