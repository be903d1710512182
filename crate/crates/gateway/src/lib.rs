//! HTTP/SSE front end for the weave engine, a stand-in for hosted
//! backends, and the `weave` command line.
//!
//! ```no_run
//! use weave_gateway::{server, Gateway, GatewayConfig};
//!
//! let gw = Gateway::new(GatewayConfig::default()).unwrap();
//! let handle = server::spawn(gw, "127.0.0.1:0".parse().unwrap()).unwrap();
//! println!("serving on {}", handle.url());
//! ```

pub mod cli;
pub mod hub;
pub mod server;
pub mod service;
pub mod stub;

pub use hub::{Frame, Hub, Subscription};
pub use service::{
    Accepted, Attachment, Gateway, GatewayConfig, GatewayError, Job, PlanEntry, PlanStatus,
};
