//! Python bindings. Placeholder while the core crate stabilizes.

use pyo3::prelude::*;

#[pymodule]
fn clods_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
