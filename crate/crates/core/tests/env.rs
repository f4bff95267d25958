//! The worker-count environment override. Kept in its own test binary
//! because it mutates the process environment.

use mural3m_core::pipeline::{PipelineConfig, WORKERS_ENV};

#[test]
fn environment_overrides_the_worker_count() {
    let mut cfg = PipelineConfig::from_pairs(&[("workers", "2")]).unwrap();
    std::env::remove_var(WORKERS_ENV);
    cfg.apply_env().unwrap();
    assert_eq!(cfg.workers, 2);

    std::env::set_var(WORKERS_ENV, "5");
    cfg.apply_env().unwrap();
    assert_eq!(cfg.workers, 5);

    for bad in ["0", "-1", "many", ""] {
        std::env::set_var(WORKERS_ENV, bad);
        assert!(cfg.apply_env().is_err(), "{bad:?}");
    }
    std::env::remove_var(WORKERS_ENV);
}
