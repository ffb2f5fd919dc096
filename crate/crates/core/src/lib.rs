pub mod diff;
pub mod simenv;
pub mod features;
pub mod transport;
pub mod morphopt;
pub mod rl_sac;
pub mod imitation;
pub mod coil;
