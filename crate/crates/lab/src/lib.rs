pub mod checks;
pub mod ensemble;
pub mod io;
pub mod replicate;
pub mod run;
pub mod scenario;
