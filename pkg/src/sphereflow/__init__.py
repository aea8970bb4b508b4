"""Optical flow estimation and decomposition on the unit sphere.

Submodules (import them directly; this init stays import-light so the CLI
can configure BLAS threading before numpy loads):

    mesh       icosphere construction, triangle geometry, point location
    harmonics  scalar and tangential vector spherical harmonics
    fields     scalar frames, voxel projection, synthetic rotation data
    spectral   coefficient vectors, Sobolev weights, Helmholtz split
    assembly   quadrature table and Galerkin system assembly
    models     single-field / u+v / hierarchical variational solvers
    viz        color-coded rendering and streamline tracing
    cli        command-line interface
"""

__version__ = "0.1.0"

FORMAT_VERSIONS = {
    "spheremesh": 1,
    "spherefield": 1,
    "spheretrifield": 1,
    "voxelgrid": 1,
    "coeffs": 1,
}
