import io
import random

import pytest

from symba.fsrp import BenOrStyle, PointMassMajority, VOTE0
from symba.lockstep import (
    GeneratorStats,
    GroupLayout,
    HorizonTooSmall,
    MalformedZ,
    PropertyViolation,
    ZFamily,
    chain_generator,
    derive_Z,
    derive_permutations,
    differing_groups,
    read_chain,
    replay_class,
    verify_chain,
    write_chain,
)

THREE = GroupLayout(18, 6)


def group_set(layout, *gs):
    return {p for g in gs for p in layout.members(g)}


def z_oracle(layout, z, E):
    """Pairs form of the Z recurrence, computed on processor sets."""
    G = layout.groups
    Z = {}
    for i in range(1, E + 1):
        for j in range(1, G + 1):
            acc = {(p, k) for p in z[(i, j)] for k in range(1, i + 1)}
            if i > 1:
                acc |= Z[(i - 1, j)]
                for jp in range(1, G + 1):
                    if set(layout.members(jp)) & z[(i, j)]:
                        acc |= Z[(i - 1, jp)]
            Z[(i, j)] = acc
    return Z


def complement_z(layout, E, rng):
    G = layout.groups
    z = {}
    for i in range(1, E + 1):
        for j in range(1, G + 1):
            x = rng.randint(1, G)
            z[(i, j)] = group_set(layout, *[g for g in range(1, G + 1) if g != x])
    return z


def test_layout_invariants():
    lay = GroupLayout(25, 5)
    assert lay.groups == 5 and lay.faulty_per_group == 1 and lay.good_per_group == 4
    assert len(lay.faulty()) == 5
    assert all(sum(lay.is_faulty(p) for p in lay.members(g)) == 1 for g in range(1, 6))
    with pytest.raises(ValueError):
        GroupLayout(25, 4)
    with pytest.raises(ValueError):
        GroupLayout(12, 4)  # c*t = 4/3


def test_z_base_case():
    z = {(1, 1): group_set(THREE, 1, 2), (1, 2): group_set(THREE, 1, 2), (1, 3): group_set(THREE, 1, 2)}
    zf = derive_Z(THREE, z)
    assert zf.pairs(1, 1, THREE) == {(p, 1) for p in group_set(THREE, 1, 2)}


def test_z_second_round_by_hand():
    z = {(1, j): group_set(THREE, 1, 2) for j in (1, 2, 3)}
    z[(1, 3)] = group_set(THREE, 2, 3)
    z.update({(2, j): group_set(THREE, 1, 2) for j in (1, 2, 3)})
    z[(2, 1)] = group_set(THREE, 1, 3)
    zf = derive_Z(THREE, z)
    z11 = {(p, 1) for p in group_set(THREE, 1, 2)}
    z13 = {(p, 1) for p in group_set(THREE, 2, 3)}
    expect = z11 | {(p, k) for p in group_set(THREE, 1, 3) for k in (1, 2)} | z11 | z13
    assert zf.pairs(2, 1, THREE) == expect


def test_z_matches_pair_oracle_and_invariants():
    rng = random.Random(1)
    for layout in (THREE, GroupLayout(25, 5)):
        for _ in range(30):
            E = rng.randint(1, 6)
            z = complement_z(layout, E, rng)
            zf = derive_Z(layout, z)
            oracle = z_oracle(layout, z, E)
            for (i, j), pairs in oracle.items():
                got = zf.pairs(i, j, layout)
                assert got == pairs
                if i > 1:
                    assert zf.pairs(i - 1, j, layout) <= got
                for p, k in got:
                    assert all((q, k) in got for q in layout.members(layout.group_of(p)))


def test_malformed_z_rejected():
    with pytest.raises(MalformedZ):
        derive_Z(THREE, {(1, 1): group_set(THREE, 1), (1, 2): group_set(THREE, 1, 2), (1, 3): group_set(THREE, 1, 2)})
    bad = group_set(THREE, 1, 2) - {1}
    with pytest.raises(MalformedZ):
        derive_Z(THREE, {(1, 1): bad, (1, 2): group_set(THREE, 1, 2), (1, 3): group_set(THREE, 1, 2)})


def test_permutation_group_order_example():
    # block (1, 1) reaches group 1 in round 1, group 2 in round 2 and never group 3
    zf = ZFamily(3, ((2, 1, 1), (2, 3, 1)))
    perms = derive_permutations(zf, THREE)
    assert zf.first_round(1, 1, 1) == 1 and zf.first_round(1, 1, 2) == 2 and zf.first_round(1, 1, 3) is None
    assert perms.group_order(1, 1) == (1, 2, 3)


def test_permutation_all_absent_is_index_order():
    zf = ZFamily(3, ((3, 3, 3),))
    perms = derive_permutations(zf, THREE)
    assert perms.group_order(3, 1) == (1, 2, 3)
    assert perms.perm(13, 1) == tuple(range(1, 19))


def test_permutations_are_contiguous_blocks():
    rng = random.Random(4)
    lay = GroupLayout(25, 5)
    for _ in range(20):
        zf = derive_Z(lay, complement_z(lay, 4, rng))
        perms = derive_permutations(zf, lay)
        for p in range(1, 26):
            for k in range(1, 5):
                pi = perms.perm(p, k)
                assert sorted(pi) == list(range(1, 26))
                groups = [lay.group_of(q) for q in pi]
                runs = [g for i, g in enumerate(groups) if i == 0 or groups[i - 1] != g]
                assert len(runs) == 5


def test_single_group_chain_has_two_classes():
    lay = GroupLayout(5, 5)
    pf = BenOrStyle(5, 5)
    chain = list(chain_generator(lay, pf, 3))
    assert [c.inputs for c in chain] == [(0,), (1,)]
    report = verify_chain(chain, pf, lay)
    assert report.properties == {"1": True, "2": True, "3": True, "4": True}


def test_horizon_too_small():
    with pytest.raises(HorizonTooSmall):
        next(chain_generator(THREE, PointMassMajority(18, 6), 0))


def test_point_mass_replay_uses_single_payload():
    pf = PointMassMajority(18, 6)
    cls = next(chain_generator(THREE, pf, 4))
    replay_class(THREE, cls, pf)
    assert all(block == ((VOTE0, 6),) for block in cls.blocks.values())


@pytest.mark.parametrize("protocol", [PointMassMajority, BenOrStyle])
def test_three_groups_chain_properties(protocol):
    pf = protocol(18, 6)
    stats = GeneratorStats()
    chain = list(chain_generator(THREE, pf, 4, stats=stats))
    assert chain[0].inputs == (0, 0, 0) and chain[-1].inputs == (1, 1, 1)
    assert all(len(differing_groups(a, b)) == 1 for a, b in zip(chain, chain[1:]))
    assert stats.max_list <= 5
    report = verify_chain(chain, pf, THREE)
    assert report.complete and report.classes == len(chain)


def test_all_zero_replay_never_decides_one():
    pf = BenOrStyle(25, 5)
    lay = GroupLayout(25, 5)
    first = next(chain_generator(lay, pf, 4))
    res = replay_class(lay, first, pf)
    assert set(res.good_decisions(lay).values()) == {0}


def test_replay_twice_same_views():
    pf = BenOrStyle(25, 5)
    lay = GroupLayout(25, 5)
    cls = next(c for c in chain_generator(lay, pf, 4) if c.index == 40)
    a, b = replay_class(lay, cls, pf), replay_class(lay, cls, pf)
    assert a.config.fingerprint() == b.config.fingerprint()
    assert {p: s.views for p, s in a.config.processes.items()} == {p: s.views for p, s in b.config.processes.items()}


def test_witness_leaves_good_processors_undecided():
    pf = BenOrStyle(25, 5)
    lay = GroupLayout(25, 5)
    cls = next(c for c in chain_generator(lay, pf, 4) if c.undecided_groups())
    res = replay_class(lay, cls, pf)
    undecided = res.undecided_good(lay)
    assert {lay.group_of(p) for p in undecided} == set(cls.undecided_groups())


def test_chain_file_round_trip():
    pf = BenOrStyle(18, 6)
    chain = list(chain_generator(THREE, pf, 4))
    buf = io.StringIO()
    assert write_chain(chain, buf) == len(chain)
    buf.seek(0)
    back = list(read_chain(buf, THREE, pf))
    assert [c.S for c in back] == [c.S for c in chain]
    assert [c.inputs for c in back] == [c.inputs for c in chain]


def test_tampered_chain_file_flagged():
    pf = BenOrStyle(18, 6)
    chain = list(chain_generator(THREE, pf, 4))[:3]
    buf = io.StringIO()
    write_chain(chain, buf)
    lines = buf.getvalue().splitlines()
    lines[1] = lines[1].replace(VOTE0.hex(), "ff", 1)
    with pytest.raises(PropertyViolation):
        list(read_chain(io.StringIO("\n".join(lines)), THREE, pf))


def test_non_adjacent_classes_rejected():
    pf = BenOrStyle(18, 6)
    chain = list(chain_generator(THREE, pf, 4))
    with pytest.raises(PropertyViolation) as err:
        verify_chain([chain[0], chain[-1]], pf, THREE)
    assert err.value.prop == "2"
