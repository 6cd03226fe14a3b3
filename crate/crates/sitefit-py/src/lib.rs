//! Python bindings: a `Placement` class plus a synthetic-instance generator,
//! mirroring the command-line surface (legalize, check, stats, svg).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sitefit::io::{parse_placement, write_placement};
use sitefit::legalizer::{legalize as run_legalize, LegalizeConfig};
use sitefit::model::{
    average_displacement, check_legal, max_displacement, Placement, Violation,
};
use sitefit::svg::render_svg;
use sitefit::synth::{generate as synth_generate, SyntheticSpec};

#[pyclass(name = "Placement")]
struct PyPlacement {
    inner: Placement,
}

fn violation_line(p: &Placement, v: &Violation) -> String {
    let name = |id: usize| p.cells[id].name.as_str();
    match v {
        Violation::Overlap(a, b) => format!("overlap {} {}", name(*a), name(*b)),
        Violation::OutOfBounds(c) => format!("outOfBounds {}", name(*c)),
        Violation::OffSite(c) => format!("offSite {}", name(*c)),
        Violation::RailMismatch(c) => format!("railMismatch {}", name(*c)),
        Violation::OnBlockage(c) => format!("onBlockage {}", name(*c)),
    }
}

#[pymethods]
impl PyPlacement {
    /// Parse the plain-text placement format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        parse_placement(text)
            .map(|inner| PyPlacement { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn num_cells(&self) -> usize {
        self.inner.cells.len()
    }

    #[getter]
    fn num_rows(&self) -> i64 {
        self.inner.grid.num_rows
    }

    #[getter]
    fn num_sites(&self) -> i64 {
        self.inner.grid.num_sites
    }

    /// (name, x, y) for every cell, in file order.
    fn positions(&self) -> Vec<(String, f64, f64)> {
        self.inner.cells.iter().map(|c| (c.name.clone(), c.cx, c.cy)).collect()
    }

    fn average_displacement(&self) -> f64 {
        average_displacement(&self.inner).unwrap_or(0.0)
    }

    fn max_displacement(&self) -> f64 {
        max_displacement(&self.inner).unwrap_or(0.0)
    }

    /// Violation descriptions; empty means legal.
    fn check(&self) -> Vec<String> {
        check_legal(&self.inner)
            .iter()
            .map(|v| violation_line(&self.inner, v))
            .collect()
    }

    /// Legalize in place and return the run report as a dict.
    #[pyo3(signature = (
        window_rows = 10, window_sites = 100, ws = 8, expand_factor = 2,
        max_expand = 4, parallelism = 1, oracle_check = false, seed = 0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn legalize<'py>(
        &mut self,
        py: Python<'py>,
        window_rows: i64,
        window_sites: i64,
        ws: usize,
        expand_factor: i64,
        max_expand: u32,
        parallelism: usize,
        oracle_check: bool,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = LegalizeConfig {
            window_rows,
            window_sites,
            ws,
            expand_factor,
            max_expand,
            parallelism,
            oracle_check,
            seed,
        };
        let rep = run_legalize(&mut self.inner, &cfg)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let d = PyDict::new(py);
        d.set_item("sam", rep.sam)?;
        d.set_item("maxDisp", rep.max_disp)?;
        d.set_item("perHeightSam", rep.per_height_sam)?;
        d.set_item("cellsLegalized", rep.cells_legalized)?;
        d.set_item("fallbacksUsed", rep.fallbacks_used)?;
        d.set_item("expansions", rep.expansions)?;
        d.set_item("runtimeMs", rep.runtime_ms)?;
        Ok(d)
    }

    /// Serialize to the plain-text placement format.
    fn write(&self) -> String {
        write_placement(&self.inner)
    }

    fn svg(&self) -> String {
        render_svg(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Placement({} cells, {}x{} grid)",
            self.inner.cells.len(),
            self.inner.grid.num_rows,
            self.inner.grid.num_sites
        )
    }
}

/// Synthetic legal-density instance with global positions perturbed off-grid.
#[pyfunction]
#[pyo3(signature = (num_cells, density = 0.6, seed = 0))]
fn generate(num_cells: usize, density: f64, seed: u64) -> PyResult<PyPlacement> {
    let spec = SyntheticSpec::sized(num_cells, density, seed);
    synth_generate(&spec)
        .map(|inner| PyPlacement { inner })
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn sitefit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlacement>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    Ok(())
}
