import numpy as np
import pytest

import memory
from memory import BAD, GOOD, UNK, BankParams, MemoryBank
from perception import BBox, MstpSelection, STPCandidate


FAR_HASHES = [0x0000000000000000, 0xFFFFFFFFFFFFFFFF, 0x00000000FFFFFFFF, 0xFFFFFFFF00000000]
DOOR = BBox(100, 40, 160, 140)


def basis(i):
    return np.eye(64)[i]


def selection(box):
    return MstpSelection(STPCandidate(box, 0.9, np.zeros(64), 4), 0.9, 0)


def filled_bank(n, params=BankParams(), times=None):
    bank = MemoryBank(params)
    for i in range(n):
        assert bank.consider_insert(basis(i), FAR_HASHES[i], None, times[i] if times else i)
    return bank


def bad_entry_bank(now=0, params=BankParams()):
    bank = filled_bank(1, params)
    bank.promote(params.t_quar)
    entry = bank.active[0]
    entry.sigma = 3
    entry.t_dec = now
    entry.decision_box = DOOR
    entry.o = BAD
    return bank


def test_params_validation():
    with pytest.raises(ValueError):
        BankParams(delta_z=1.0)
    with pytest.raises(ValueError):
        BankParams(t_eval=0)


def test_insert_into_empty_bank():
    bank = MemoryBank()
    assert bank.consider_insert(basis(0), 0, 2, now=5)
    entry = bank.quarantine[0]
    assert entry.o == UNK
    assert entry.t_act == 5 + BankParams().t_quar
    assert entry.sigma == 2


def test_reinsert_same_frame_is_rejected():
    bank = MemoryBank()
    assert bank.consider_insert(basis(0), 0, None, now=0)
    assert not bank.consider_insert(basis(0), 0, None, now=15)
    assert len(bank) == 1


def test_cosine_novelty_rejects_near_duplicate():
    bank = filled_bank(1)
    z = 0.95 * basis(0) + np.sqrt(1 - 0.95 ** 2) * basis(1)
    h = 0x0000000000000FFF
    assert not bank.consider_insert(z, h, None, now=15)


def test_novelty_checks_active_entries_too():
    bank = filled_bank(1)
    bank.promote(60)
    assert not bank.consider_insert(basis(0), 0, None, now=75)


def test_promote_boundary_inclusive():
    bank = filled_bank(1)
    assert bank.promote(59) == 0
    assert bank.promote(60) == 1
    assert bank.quarantine == []


def test_promote_only_due_entries():
    bank = filled_bank(2, times=[0, 40])
    assert bank.promote(70) == 1
    assert [m.id for m in bank.active] == [0]
    assert [m.id for m in bank.quarantine] == [1]


def test_entries_not_queryable_before_activation():
    bank = filled_bank(1)
    assert bank.knn(basis(0)) == []
    bank.promote(59)
    assert bank.knn(basis(0)) == []
    bank.promote(60)
    assert len(bank.knn(basis(0))) == 1


def test_associate_decision_window():
    bank = MemoryBank()
    assert bank.associate_decision(4, DOOR, now=100) is None
    bank.consider_insert(basis(0), FAR_HASHES[0], None, now=90)
    assert bank.associate_decision(4, DOOR, now=100) == 0
    entry = bank.quarantine[0]
    assert (entry.sigma, entry.t_dec, entry.decision_box) == (4, 100, DOOR)


def test_associate_decision_picks_latest():
    bank = filled_bank(2, times=[80, 95])
    assert bank.associate_decision(6, DOOR, now=100) == 1


def test_associate_decision_first_wins():
    bank = filled_bank(1, times=[95])
    assert bank.associate_decision(6, DOOR, now=100) == 0
    assert bank.associate_decision(2, DOOR, now=105) is None
    assert bank.quarantine[0].sigma == 6


def test_associate_ignores_stale_entries():
    bank = filled_bank(1, times=[50])
    assert bank.associate_decision(6, DOOR, now=100) is None


def test_label_outcome():
    entry = memory.MemoryEntry(0, basis(0), 0, 0, 60, sigma=4, t_dec=10, decision_box=DOOR)
    assert memory.label_outcome(entry, None, 0.3) == BAD
    assert memory.label_outcome(entry, selection(DOOR), 0.3) == GOOD


def test_label_outcome_threshold_is_strict():
    entry = memory.MemoryEntry(0, basis(0), 0, 0, 60, sigma=4, t_dec=10,
                               decision_box=BBox(0, 0, 10, 10))
    assert memory.label_outcome(entry, selection(BBox(0, 0, 10, 3)), 0.3) == BAD


def test_label_outcome_without_decision():
    entry = memory.MemoryEntry(0, basis(0), 0, 0, 60)
    with pytest.raises(memory.MissingDecision):
        memory.label_outcome(entry, None, 0.3)


def test_label_due_waits_for_evaluation_time():
    bank = filled_bank(1, times=[95])
    bank.associate_decision(3, DOOR, now=100)
    assert bank.label_due(selection(DOOR), now=144) == 0
    assert bank.label_due(selection(DOOR), now=145) == 1
    assert bank.quarantine[0].o == GOOD
    assert bank.label_due(None, now=200) == 0


def test_knn_ordering():
    bank = filled_bank(3)
    bank.promote(100)
    result = bank.knn(basis(1), k=8)
    assert len(result) == 3
    assert result[0][0].id == 1
    assert result[0][1] == pytest.approx(1.0)
    assert [m.id for m, _ in result[1:]] == [0, 2]


def test_knn_empty():
    assert MemoryBank().knn(basis(0)) == []


def test_penalty_without_bad_entries():
    bank = filled_bank(2)
    bank.promote(100)
    assert bank.penalty(basis(0), 3, now=100) == 0.0


def test_penalty_unit_factors():
    bank = bad_entry_bank(now=200)
    assert bank.penalty(basis(0), 3, now=200) == pytest.approx(0.5)


def test_penalty_half_life():
    bank = bad_entry_bank(now=200)
    assert bank.penalty(basis(0), 3, now=200 + 1800) == pytest.approx(0.25)


def test_penalty_sector_kernel():
    bank = bad_entry_bank(now=200)
    assert bank.penalty(basis(0), 4, now=200) == pytest.approx(0.5 * np.exp(-0.5))


def test_good_entries_never_penalize():
    bank = bad_entry_bank(now=200)
    bank.active[0].o = GOOD
    assert bank.penalty(basis(0), 3, now=200) == 0.0


def test_penalty_is_nonincreasing_in_time():
    bank = bad_entry_bank(now=0)
    values = [bank.penalty(basis(0), 3, now=t) for t in range(0, 5000, 250)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert all(v >= 0 for v in values)


def test_capacity_evicts_unlabeled_oldest():
    bank = filled_bank(2, BankParams(capacity=2))
    bank.quarantine[0].o = GOOD
    assert bank.consider_insert(basis(5), FAR_HASHES[2], None, now=10)
    assert len(bank) == 2
    assert [m.id for m in bank.quarantine] == [0, 2]


def test_dump_and_load(tmp_path):
    bank = bad_entry_bank(now=200)
    bank.consider_insert(basis(7), FAR_HASHES[3], 5, now=300)
    path = tmp_path / "memory.json"
    bank.dump(path)
    loaded = MemoryBank.load(path)
    assert len(loaded) == 2
    assert loaded.active[0].o == BAD
    assert loaded.active[0].decision_box == DOOR
    assert loaded.quarantine[0].h == FAR_HASHES[3]
    assert loaded.penalty(basis(0), 3, now=200) == pytest.approx(0.5)


def brute_force_penalty(entries, z, sector, now, p):
    ranked = sorted(entries, key=lambda m: -float(np.dot(z, m.z)))[:p.knn_k]
    total = 0.0
    for m in ranked:
        if m.o == BAD:
            cos = float(np.dot(z, m.z))
            total += (max(0.0, cos)
                      * np.exp(-((sector - m.sigma) ** 2) / (2 * p.sector_kernel_width ** 2))
                      * 0.5 ** ((now - m.t_dec) / p.time_decay_halflife))
    return p.lam * total


def test_penalty_matches_brute_force():
    rng = np.random.default_rng(11)
    for trial in range(1000):
        params = BankParams(knn_k=int(rng.integers(1, 10)), lam=float(rng.uniform(0.1, 2.0)),
                            sector_kernel_width=float(rng.uniform(0.5, 3.0)))
        bank = MemoryBank(params)
        for i in range(int(rng.integers(0, 20))):
            z = rng.normal(size=64)
            bank.active.append(memory.MemoryEntry(
                i, z / np.linalg.norm(z), i, t_insert=0, t_act=0,
                sigma=int(rng.integers(1, 9)), t_dec=int(rng.integers(0, 500)),
                o=str(rng.choice([GOOD, BAD, UNK]))))
        z = rng.normal(size=64)
        z /= np.linalg.norm(z)
        sector = int(rng.integers(1, 9))
        expected = brute_force_penalty(bank.active, z, sector, 600, params)
        assert bank.penalty(z, sector, 600) == pytest.approx(expected, abs=1e-12), trial
