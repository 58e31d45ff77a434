pub mod csv_io;
pub mod synth;
pub mod truth;

pub use csv_io::{l2_norm_rows, load_csv, read_csv, save_csv, write_csv};
pub use synth::{gen_class_balance, gen_gaussian_shift, gen_outlier_mixture, gen_step_series, ClassBalanceData};
