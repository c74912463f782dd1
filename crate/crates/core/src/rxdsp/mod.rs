//! Receiver DSP: linear chain, digital back-propagation benchmark and
//! quality metrics (EVM, BER, Q-factor).
//!
//! Everything operates on immutable inputs and returns fresh frames, so
//! per-subcarrier work can run concurrently without coordination.

mod dbp;
mod linear;
mod metrics;

pub use dbp::{dbp_equalize, DbpOptions, DbpSteps};
pub use linear::{rx_linear, CarrierRecovery, CdcMode, DbpConfig, RxChainConfig};
pub use metrics::{
    erfc, evm_db, gaussian_q, probit, q_db_from_ber, q_factor, qam_ber_awgn, ChannelMetrics,
    MetricsReport,
};
