//! Tolerances pinned for the acceptance report. They equal the config
//! defaults; keeping a copy here means a config edit cannot move the bar.

use rhl_cli::config::Tolerances;

pub const PINNED: Tolerances = Tolerances {
    crho_table: 5e-4,
    crho_range: 0.01,
    cross_asymptote_rel: 0.02,
    triple_rel: 0.02,
    sweep_factor: 5.0,
    shift_self: 0.05,
    shift_cross: 0.1,
    sve_z: 3.0,
    rho_slope: 0.15,
    cross_increment: 0.15,
    self_increment: 0.1,
    laplace_z: 3.0,
    hawkes_z: 3.0,
    trend_gap: 0.5,
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_matches_config_defaults() {
        assert_eq!(PINNED, Tolerances::default());
    }
}
