"""Regenerates the binary fixtures in this directory.

NPY files come from numpy.save. NIfTI files are packed field by field with
struct following the NIfTI-1 header layout (348 bytes, 4 extension bytes,
data at offset 352).
"""

import pathlib
import struct

import numpy as np

HERE = pathlib.Path(__file__).resolve().parent

DTYPES = {2: ("B", 8), 4: ("h", 16), 16: ("f", 32), 64: ("d", 64)}


def nifti(dims, datatype, values, endian="<", slope=0.0, inter=0.0, magic=b"n+1\0", sizeof_hdr=348):
    code, bitpix = DTYPES[datatype]
    hdr = bytearray(348)
    struct.pack_into(endian + "i", hdr, 0, sizeof_hdr)
    dim = [len(dims)] + list(dims) + [1] * (7 - len(dims))
    struct.pack_into(endian + "8h", hdr, 40, *dim)
    struct.pack_into(endian + "h", hdr, 70, datatype)
    struct.pack_into(endian + "h", hdr, 72, bitpix)
    struct.pack_into(endian + "8f", hdr, 76, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into(endian + "f", hdr, 108, 352.0)
    struct.pack_into(endian + "f", hdr, 112, slope)
    struct.pack_into(endian + "f", hdr, 116, inter)
    hdr[344:348] = magic
    payload = struct.pack(endian + str(len(values)) + code, *values)
    return bytes(hdr) + b"\0\0\0\0" + payload


def main():
    # File order: first axis fastest, so file element n = i + 4 j + 16 k.
    ramp = [float(n) for n in range(64)]
    (HERE / "nifti_f32_le.nii").write_bytes(nifti((4, 4, 4), 16, ramp, "<"))
    (HERE / "nifti_f32_be.nii").write_bytes(nifti((4, 4, 4), 16, ramp, ">"))
    (HERE / "nifti_f64_le.nii").write_bytes(nifti((4, 4, 4), 64, ramp, "<"))
    (HERE / "nifti_u8_le.nii").write_bytes(nifti((4, 4, 4), 2, list(range(64)), "<"))
    (HERE / "nifti_i16_scaled.nii").write_bytes(nifti((2, 2, 2), 4, list(range(8)), "<", slope=2.0, inter=1.0))
    (HERE / "nifti_bad_magic.nii").write_bytes(nifti((4, 4, 4), 16, ramp, "<", magic=b"xy1\0"))
    (HERE / "nifti_bad_sizeof.nii").write_bytes(nifti((4, 4, 4), 16, ramp, "<", sizeof_hdr=340))
    (HERE / "nifti_truncated.nii").write_bytes(nifti((4, 4, 4), 16, ramp, "<")[:352 + 100])
    (HERE / "nifti_bad_datatype.nii").write_bytes(
        nifti((4, 4, 4), 16, ramp, "<")[:70] + struct.pack("<h", 512) + nifti((4, 4, 4), 16, ramp, "<")[72:])

    np.save(HERE / "golden_f32_2x2.npy", np.array([[1, 2], [3, 4]], dtype="<f4"))
    np.save(HERE / "golden_f64_scalar.npy", np.array(2.5, dtype="<f8"))
    np.save(HERE / "golden_f16_3.npy", np.array([0.0, 1.0, -65504.0], dtype="<f2"))
    np.save(HERE / "golden_i8_2x3.npy", np.array([[0, 1, -1], [127, -128, 5]], dtype="i1"))
    np.save(HERE / "golden_u8_4.npy", np.array([0, 1, 200, 255], dtype="u1"))
    np.save(HERE / "golden_i16_1x2x2.npy", np.array([[[-300, 0], [1, 32767]]], dtype="<i2"))
    np.save(HERE / "golden_f32_wide.npy", np.arange(3 * 17 * 1000, dtype="<f4").reshape(3, 17, 1000))
    np.save(HERE / "fortran_f32_2x3.npy", np.asfortranarray(np.arange(6, dtype="<f4").reshape(2, 3)))
    np.save(HERE / "bigendian_f4_2.npy", np.array([1.0, 2.0], dtype=">f4"))


if __name__ == "__main__":
    main()
