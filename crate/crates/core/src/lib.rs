//! Two-server skyline queries over additively secret-shared data.
//!
//! A data owner splits an integer database into two random shares held by
//! two non-colluding servers. A client shares a query tuple the same way.
//! The servers then jointly compute the dynamic skyline of the database with
//! respect to the query and return shares of the result rows; neither server
//! learns the data, the query, the result or which rows were touched.
//!
//! Layers, bottom up:
//!
//! * [`ring`], [`sharing`]: arithmetic in `Z_{2^l}` and two-party sharing.
//! * [`correlated`]: dealer-generated Beaver triples and daBits.
//! * [`gadgets`]: comparison, bit-times-value, select and tree minimum.
//! * [`protocol`]: mapping, fetching, filtering and the query loop.
//! * [`plaintext`], [`datasets`]: reference skyline and input data.
//! * [`runtime`], [`store`]: channels, sessions, servers and file formats.

pub mod correlated;
pub mod datasets;
pub mod error;
pub mod gadgets;
pub mod plaintext;
pub mod protocol;
pub mod ring;
pub mod runtime;
pub mod sharing;
pub mod store;

pub use error::{Error, Result};
pub use ring::{Ring, RingElement};
pub use sharing::PartyId;
