//! Execution of the server, client and owner roles.

pub mod channel;
pub mod client;
pub mod frame;
pub mod local;
pub mod metrics;
pub mod server;
pub mod session;

pub use channel::{Channel, LocalChannel, TcpChannel};
pub use local::{local_query, run_pair, run_pair_over, LocalConfig, LocalQuery, PairRun};
pub use session::{Label, Meter, Phase, Session, Transcript};
