from .broadphase import broadphase_pairs, ContactSurface
from .io import load_tet_mesh, load_tri_mesh, write_obj, write_tetgen, write_vtk
from .mesh import MeshError, TetMesh, TriMesh, extract_surface, lump_masses, signed_volumes, unique_edges

__all__ = [
    "ContactSurface", "MeshError", "TetMesh", "TriMesh", "broadphase_pairs", "extract_surface",
    "load_tet_mesh", "load_tri_mesh", "lump_masses", "signed_volumes", "unique_edges",
    "write_obj", "write_tetgen", "write_vtk",
]
