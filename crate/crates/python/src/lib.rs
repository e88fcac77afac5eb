//! Python bindings: planner functions, the scheduler, the codec and the
//! simulator.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use batscast::analytics as ana;
use batscast::codec::{BatchCode, BatchEncoder, BatchState, Decoder, DegreeDistribution, Packet};
use batscast::gf::{self as gf, CoeffMatrix, PayloadMatrix};
use batscast::sched::{build_matrix, build_queue, ReceptionProfile};
use batscast::sim::{self, AccessPolicy, SimConfig};

fn py_err(e: batscast::Error) -> PyErr {
    match e {
        batscast::Error::Livelock { .. } | batscast::Error::NoStoppingTime { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Channel and code parameters. Defaults are the three-user, 1600-packet
/// setting.
#[pyclass(name = "NetworkParams", from_py_object)]
#[derive(Clone)]
struct PyNetworkParams {
    inner: ana::NetworkParams,
}

#[pymethods]
impl PyNetworkParams {
    #[new]
    #[pyo3(signature = (k=3, p0=0.05, p1=0.5, p2=0.1, batch_size=16, file_packets=1600, eta=0.01, epsilon=1e-6))]
    #[allow(clippy::too_many_arguments)]
    fn new(k: usize, p0: f64, p1: f64, p2: f64, batch_size: usize, file_packets: usize, eta: f64, epsilon: f64) -> PyResult<Self> {
        let inner = ana::NetworkParams {
            k,
            p0,
            p1,
            p2,
            batch_size,
            file_packets,
            eta,
            epsilon,
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }
    #[getter]
    fn p0(&self) -> f64 {
        self.inner.p0
    }
    #[getter]
    fn p1(&self) -> f64 {
        self.inner.p1
    }
    #[getter]
    fn p2(&self) -> f64 {
        self.inner.p2
    }
    #[getter]
    fn batch_size(&self) -> usize {
        self.inner.batch_size
    }
    #[getter]
    fn file_packets(&self) -> usize {
        self.inner.file_packets
    }
    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    fn effective_erasure(&self) -> f64 {
        ana::effective_erasure(&self.inner)
    }

    fn min_batches(&self) -> usize {
        ana::min_batches(&self.inner)
    }

    fn max_batches(&self) -> usize {
        ana::max_batches(&self.inner)
    }

    fn stopping_time(&self, n: usize) -> PyResult<u64> {
        ana::stopping_time(n, &self.inner).map_err(py_err)
    }

    fn redundancy(&self, t: f64, n: usize) -> f64 {
        ana::redundancy(t, n, &self.inner)
    }

    fn delta_distribution(&self) -> Vec<f64> {
        ana::delta_distribution(&self.inner)
    }

    /// Predicted rank distribution after phase 2 of length `t`.
    fn rank_distribution(&self, n: usize, t: f64) -> Vec<f64> {
        ana::rank_distribution(n, t, &self.inner).pr().to_vec()
    }

    fn rank_distribution_approx(&self) -> Vec<f64> {
        ana::rank_distribution_approx(&self.inner).pr().to_vec()
    }

    /// `(n_l, n_u, n_opt, [(n, T, total), ...])`.
    fn plan(&self) -> PyResult<(usize, usize, usize, Vec<(usize, u64, u64)>)> {
        let p = ana::optimize_batches(&self.inner).map_err(py_err)?;
        let curve = p.curve.iter().map(|c| (c.n, c.t, c.total)).collect();
        Ok((p.n_min, p.n_max, p.n_opt, curve))
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "NetworkParams(k={}, p0={}, p1={}, p2={}, batch_size={}, file_packets={}, eta={}, epsilon={})",
            p.k, p.p0, p.p1, p.p2, p.batch_size, p.file_packets, p.eta, p.epsilon
        )
    }
}

/// Usefulness matrix rows `u = 0..M-1` for phase-1 counts.
#[pyfunction]
fn usefulness_matrix(counts: Vec<usize>, batch_size: usize, p1: f64, p2: f64) -> PyResult<Vec<Vec<f64>>> {
    let profile = ReceptionProfile::new(counts, batch_size).map_err(py_err)?;
    let s = build_matrix(&profile, p1, p2);
    Ok((0..s.rows()).map(|u| s.row(u).to_vec()).collect())
}

/// 1-based batch IDs in transmission order.
#[pyfunction]
fn transmit_queue(counts: Vec<usize>, batch_size: usize, p1: f64, p2: f64) -> PyResult<Vec<u32>> {
    let profile = ReceptionProfile::new(counts, batch_size).map_err(py_err)?;
    Ok(build_queue(&build_matrix(&profile, p1, p2)).order().to_vec())
}

#[pyfunction]
fn gf_mul(a: u8, b: u8) -> u8 {
    gf::mul(a, b)
}

#[pyfunction]
fn gf_inv(a: u8) -> PyResult<u8> {
    if a == 0 {
        return Err(PyValueError::new_err("zero has no inverse"));
    }
    Ok(gf::inv(a))
}

/// Rank over GF(256) of equal-length byte rows.
#[pyfunction]
fn gf_rank(rows: Vec<Vec<u8>>) -> PyResult<usize> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows differ in length"));
    }
    Ok(gf::rank(&CoeffMatrix::from_rows(&rows, cols)))
}

/// A coded packet.
#[pyclass(name = "Packet", from_py_object)]
#[derive(Clone)]
struct PyPacket {
    inner: Packet,
}

#[pymethods]
impl PyPacket {
    #[getter]
    fn batch_id(&self) -> u32 {
        self.inner.batch_id
    }
    #[getter]
    fn coeff<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.coeff)
    }
    #[getter]
    fn payload<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.payload)
    }

    fn to_wire<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &self.inner.to_wire().map_err(py_err)?))
    }
}

/// Receive buffer of one batch.
#[pyclass(name = "BatchBuffer")]
struct PyBatchBuffer {
    inner: BatchState,
}

#[pymethods]
impl PyBatchBuffer {
    #[new]
    fn new(batch_id: u32, batch_size: usize, payload_len: usize) -> Self {
        Self {
            inner: BatchState::new(batch_id, batch_size, payload_len),
        }
    }

    /// Stores the packet; returns whether it raised the rank.
    fn absorb(&mut self, packet: &PyPacket) -> PyResult<bool> {
        self.inner.absorb(&packet.inner).map_err(py_err)
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    /// A random combination of the stored packets.
    fn recode(&self, seed: u64) -> PyResult<PyPacket> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PyPacket {
            inner: self.inner.recode(&mut rng).map_err(py_err)?,
        })
    }
}

/// Encoder and decoder for one file.
#[pyclass(name = "Codec")]
struct PyCodec {
    encoder: BatchEncoder,
}

#[pymethods]
impl PyCodec {
    /// `packets` are the equal-length input packets. `degrees` is an optional
    /// degree distribution, `degrees[d-1]` the probability of degree `d`.
    #[new]
    #[pyo3(signature = (packets, batch_size, seed, degrees=None))]
    fn new(packets: Vec<Vec<u8>>, batch_size: usize, seed: u64, degrees: Option<Vec<f64>>) -> PyResult<Self> {
        let len = packets.first().map_or(0, Vec::len);
        if packets.iter().any(|p| p.len() != len) {
            return Err(PyValueError::new_err("packets differ in length"));
        }
        let dist = match degrees {
            Some(psi) => DegreeDistribution::new(psi).map_err(py_err)?,
            None => DegreeDistribution::heuristic(batch_size),
        };
        let f = packets.len();
        let file = PayloadMatrix::from_vec(f, len, packets.concat());
        let code = BatchCode::new(seed, f, batch_size, dist).map_err(py_err)?;
        Ok(Self {
            encoder: BatchEncoder::new(code, file).map_err(py_err)?,
        })
    }

    /// The `M` coded packets of batch `batch_id` (1-based).
    fn encode_batch(&mut self, batch_id: u32) -> PyResult<Vec<PyPacket>> {
        if batch_id == 0 {
            return Err(PyValueError::new_err("batch IDs start at 1"));
        }
        let (_, packets) = self.encoder.encode_batch(batch_id);
        Ok(packets.into_iter().map(|inner| PyPacket { inner }).collect())
    }

    /// Recovers the file from buffers of batches `1..=len(buffers)`, in order.
    /// Raises `ValueError` with the number of unresolved packets on failure.
    fn decode<'py>(&mut self, py: Python<'py>, buffers: Vec<PyRef<'py, PyBatchBuffer>>) -> PyResult<Vec<Bound<'py, PyBytes>>> {
        for (i, b) in buffers.iter().enumerate() {
            if b.inner.batch_id() as usize != i + 1 {
                return Err(PyValueError::new_err(format!(
                    "buffer {i} holds batch {}, expected {}",
                    b.inner.batch_id(),
                    i + 1
                )));
            }
        }
        let code = self.encoder.code();
        let f = code.file_packets();
        let states: Vec<BatchState> = buffers.iter().map(|b| b.inner.clone()).collect();
        if states.len() > code.descriptors().len() {
            return Err(PyValueError::new_err("buffers for batches that were never encoded"));
        }
        let decoded = Decoder::new(code.descriptors(), f)
            .decode(&states)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(decoded.packets.iter_rows().map(|r| PyBytes::new(py, r)).collect())
    }
}

/// Summary of one simulated run.
#[pyclass(name = "SimReport")]
struct PySimReport {
    inner: sim::SimReport,
}

#[pymethods]
impl PySimReport {
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[getter]
    fn batches(&self) -> usize {
        self.inner.batches
    }
    #[getter]
    fn phase1_tx(&self) -> u64 {
        self.inner.phase1_tx
    }
    #[getter]
    fn phase2_tx(&self) -> u64 {
        self.inner.phase2_tx
    }
    #[getter]
    fn total_tx(&self) -> u64 {
        self.inner.total_tx
    }
    #[getter]
    fn rank_at_decode(&self) -> Vec<u64> {
        self.inner.rank_at_decode.clone()
    }
    #[getter]
    fn rank_at_completion(&self) -> Vec<u64> {
        self.inner.rank_at_completion.clone()
    }
    /// Innovative packets each user held when it decoded.
    #[getter]
    fn innovative_at_decode(&self) -> Vec<u64> {
        self.inner.users.iter().map(|u| u.decode.innovative).collect()
    }
    #[getter]
    fn redundant_at_decode(&self) -> Vec<u64> {
        self.inner.users.iter().map(|u| u.decode.redundant).collect()
    }
    fn mean_overhead(&self) -> f64 {
        self.inner.mean_overhead()
    }
    fn trace_csv(&self) -> Option<String> {
        self.inner.trace_csv()
    }
}

fn sim_config(params: &PyNetworkParams, n: usize, seed: u64, access: &str, trace: bool) -> PyResult<SimConfig> {
    let access = match access {
        "round_robin" => AccessPolicy::RoundRobin,
        "random" => AccessPolicy::Random,
        other => return Err(PyValueError::new_err(format!("unknown access policy `{other}`"))),
    };
    Ok(SimConfig {
        access,
        trace,
        ..SimConfig::new(params.inner, n, seed)
    })
}

/// Both phases with `n` source batches.
#[pyfunction]
#[pyo3(signature = (params, n, seed, access="round_robin", trace=false))]
fn simulate(py: Python<'_>, params: &PyNetworkParams, n: usize, seed: u64, access: &str, trace: bool) -> PyResult<PySimReport> {
    let cfg = sim_config(params, n, seed, access, trace)?;
    let inner = py.detach(|| sim::simulate(&cfg)).map_err(py_err)?;
    Ok(PySimReport { inner })
}

/// Source-only baseline.
#[pyfunction]
#[pyo3(signature = (params, seed))]
fn run_single_phase(py: Python<'_>, params: &PyNetworkParams, seed: u64) -> PyResult<PySimReport> {
    let cfg = sim_config(params, 0, seed, "round_robin", false)?;
    let inner = py.detach(|| sim::run_single_phase(&cfg)).map_err(py_err)?;
    Ok(PySimReport { inner })
}

/// Plans for `design_k` users, simulates `params.k`; returns the batch count
/// used and the report.
#[pyfunction]
fn run_robustness(py: Python<'_>, design_k: usize, params: &PyNetworkParams, seed: u64) -> PyResult<(usize, PySimReport)> {
    let cfg = sim_config(params, 0, seed, "round_robin", false)?;
    let r = py
        .detach(|| sim::run_robustness(design_k, params.inner.k, &cfg))
        .map_err(py_err)?;
    Ok((r.batches, PySimReport { inner: r.report }))
}

#[pymodule]
fn batscast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetworkParams>()?;
    m.add_class::<PyPacket>()?;
    m.add_class::<PyBatchBuffer>()?;
    m.add_class::<PyCodec>()?;
    m.add_class::<PySimReport>()?;
    m.add_function(wrap_pyfunction!(usefulness_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(transmit_queue, m)?)?;
    m.add_function(wrap_pyfunction!(gf_mul, m)?)?;
    m.add_function(wrap_pyfunction!(gf_inv, m)?)?;
    m.add_function(wrap_pyfunction!(gf_rank, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_single_phase, m)?)?;
    m.add_function(wrap_pyfunction!(run_robustness, m)?)?;
    Ok(())
}
