from math import comb

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ducclab as dl
from ducclab.errors import InvalidDimensionError, SectorMismatchError


class TestBuildBasis:
    @pytest.mark.parametrize("M,N,size", [(4, 2, 6), (8, 4, 70), (4, 0, 1), (5, 5, 1)])
    def test_sizes(self, M, N, size):
        assert dl.build_basis(M, N).size == size

    def test_deterministic_lexicographic(self):
        basis = dl.build_basis(5, 2)
        masks = list(basis.masks)
        assert masks == sorted(masks)
        assert all(m.bit_count() == 2 for m in masks)

    def test_guards(self):
        with pytest.raises(InvalidDimensionError):
            dl.build_basis(4, 5)
        with pytest.raises(InvalidDimensionError):
            dl.build_basis(17, 2)
        with pytest.raises(InvalidDimensionError):
            dl.build_basis(4, -1)

    def test_index_roundtrip(self):
        basis = dl.build_basis(6, 3)
        for j, det in enumerate(basis):
            assert basis.index_of(det) == j
        with pytest.raises(SectorMismatchError):
            basis.index_of(dl.Determinant(0b1, 6))


class TestApplyExcitation:
    def test_single_excitation_phase(self):
        # occ=(0) -> virt=(2) on |1100> gives |0110> with phase -1
        sig = dl.ExcitationSignature((0,), (2,))
        det = dl.Determinant(0b0011, 4)
        new, ph = dl.apply_excitation(sig, det)
        assert new.bitstring() == "0110"
        assert ph == -1

    def test_annihilating_empty_orbital(self):
        sig = dl.ExcitationSignature((0,), (2,))
        det = dl.Determinant(0b0110, 4)  # orbital 0 empty
        assert dl.apply_excitation(sig, det) is None

    def test_creating_filled_orbital(self):
        sig = dl.ExcitationSignature((0,), (1,))
        det = dl.Determinant(0b0011, 4)
        assert dl.apply_excitation(sig, det) is None

    def test_identity_rank0(self):
        sig = dl.ExcitationSignature((), ())
        for mask in (0b0011, 0b1010):
            det = dl.Determinant(mask, 4)
            new, ph = dl.apply_excitation(sig, det)
            assert new == det and ph == 1

    @settings(max_examples=60, deadline=None)
    @given(data=st.data())
    def test_excite_then_deexcite_phase(self, data):
        M = data.draw(st.integers(2, 8))
        N = data.draw(st.integers(1, M - 1))
        basis = dl.build_basis(M, N)
        det = basis.determinant(data.draw(st.integers(0, basis.size - 1)))
        k = data.draw(st.integers(1, min(N, M - N)))
        # draw a signature applicable to det
        occ = tuple(sorted(data.draw(st.sets(
            st.sampled_from(det.occupied()), min_size=k, max_size=k))))
        virt = tuple(sorted(data.draw(st.sets(
            st.sampled_from(det.virtuals()), min_size=k, max_size=k))))
        sig = dl.ExcitationSignature(occ, virt)
        up = dl.apply_excitation(sig, det)
        assert up is not None
        excited, ph_up = up
        down = dl.apply_deexcitation(sig, excited)
        assert down is not None
        back, ph_down = down
        assert back == det
        assert ph_up * ph_down == 1


class TestSignatures:
    def test_validation(self):
        with pytest.raises(InvalidDimensionError):
            dl.ExcitationSignature((1, 0), (2, 3))  # not ascending
        with pytest.raises(InvalidDimensionError):
            dl.ExcitationSignature((0,), (1, 2))  # length mismatch
        with pytest.raises(InvalidDimensionError):
            dl.ExcitationSignature((0,), (0,))  # overlap

    def test_signature_between(self):
        ref = dl.Determinant(0b0011, 4)
        det = dl.Determinant(0b1010, 4)
        sig = dl.signature_between(ref, det)
        assert sig.occ == (0,) and sig.virt == (3,)
        new, _ = dl.apply_excitation(sig, ref)
        assert new == det

    def test_enumeration_count(self):
        ref = dl.aufbau_reference(6, 3)
        sigs = list(dl.enumerate_signatures(ref))
        assert len(sigs) == comb(6, 3) - 1  # bijection with non-reference dets


class TestPartition:
    def test_contiguity_enforced(self):
        with pytest.raises(InvalidDimensionError):
            dl.SpinOrbitalPartition((0,), (2,), (1,), (3,))
        part = dl.SpinOrbitalPartition((0,), (2,), (1,), (3,), allow_arbitrary=True)
        assert part.M == 4

    def test_cover_and_disjoint(self):
        with pytest.raises(InvalidDimensionError):
            dl.SpinOrbitalPartition((0,), (0,), (1,), (2,))
        with pytest.raises(InvalidDimensionError):
            dl.SpinOrbitalPartition((0,), (1,), (2,), (4,))

    def test_homo_lumo(self):
        part = dl.homo_lumo_partition(8, 4, 2, 2)
        assert part.occ_inactive == (0, 1)
        assert part.occ_active == (2, 3)
        assert part.virt_active == (4, 5)
        assert part.virt_inactive == (6, 7)
        assert part.reference() == dl.aufbau_reference(8, 4)
        with pytest.raises(InvalidDimensionError):
            dl.homo_lumo_partition(8, 4, 5, 2)


class TestClassify:
    def test_reference(self, m8_basis, m8_ref, m8_part):
        assert dl.classify_determinant(m8_ref, m8_ref, m8_part) is dl.DetClass.REFERENCE

    def test_internal_hole_active_particle_active(self):
        part = dl.homo_lumo_partition(4, 2, 1, 1)
        ref = part.reference()
        det, _ = dl.apply_excitation(dl.ExcitationSignature((1,), (2,)), ref)
        assert dl.classify_determinant(det, ref, part) is dl.DetClass.INTERNAL

    def test_inactive_hole_is_external(self):
        part = dl.homo_lumo_partition(4, 2, 1, 1)
        ref = part.reference()
        det, _ = dl.apply_excitation(dl.ExcitationSignature((0,), (2,)), ref)
        assert dl.classify_determinant(det, ref, part) is dl.DetClass.EXTERNAL

    def test_sector_mismatch(self, m8_part, m8_ref):
        with pytest.raises(SectorMismatchError):
            dl.classify_determinant(dl.Determinant(0b111, 8), m8_ref, m8_part)

    @pytest.mark.parametrize("no,nv", [(0, 0), (1, 1), (2, 2), (4, 4), (2, 3)])
    def test_partition_counts(self, m8_basis, m8_ref, no, nv):
        part = dl.homo_lumo_partition(8, 4, no, nv)
        counts = {cls: 0 for cls in dl.DetClass}
        for det in m8_basis:
            counts[dl.classify_determinant(det, m8_ref, part)] += 1
        assert counts[dl.DetClass.REFERENCE] == 1
        assert sum(counts.values()) == m8_basis.size
        # all redistributions of the active electrons over active orbitals
        assert counts[dl.DetClass.INTERNAL] == comb(no + nv, no) - 1

    @settings(max_examples=40, deadline=None)
    @given(data=st.data())
    def test_partition_counts_random_sectors(self, data):
        M = data.draw(st.integers(2, 8))
        N = data.draw(st.integers(1, M - 1))
        no = data.draw(st.integers(0, N))
        nv = data.draw(st.integers(0, M - N))
        basis = dl.build_basis(M, N)
        ref = dl.aufbau_reference(M, N)
        part = dl.homo_lumo_partition(M, N, no, nv)
        counts = {cls: 0 for cls in dl.DetClass}
        for det in basis:
            counts[dl.classify_determinant(det, ref, part)] += 1
        assert counts[dl.DetClass.REFERENCE] == 1
        assert counts[dl.DetClass.INTERNAL] == comb(no + nv, no) - 1
        assert sum(counts.values()) == basis.size
