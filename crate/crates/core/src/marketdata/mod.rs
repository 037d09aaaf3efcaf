//! Price and factor ingestion, log returns, descriptive diagnostics.

mod diagnostics;
mod factors;
mod panel;

pub use diagnostics::{
    adf_test, arch_lm_test, diagnostics, jarque_bera, kpss_test, ljung_box, DiagnosticsReport, SeriesDiagnostics,
    TestResult,
};
pub use factors::{align_factors, standardize, FactorPanel, Frequency, RawFactor};
pub use panel::{
    load_prices, load_series_csv, log_returns, parse_date, read_wide_csv, write_wide_csv, CalendarPolicy, PricePanel,
    ReturnPanel, SeriesSource,
};
