import numpy as np
import pytest

from config import experiment
from core.gradcheck import finite_diff_check
from core.tensor import Tensor
from services.models import description_batch, encode_descriptions, init_coarse_params
from services.retrieval import (
    CoarseTrainer,
    RetrievalIndex,
    build_index,
    coarse_recall,
    embed_cells,
    ranking_loss,
    ranking_loss_from_similarity,
    retrieve_batch,
    retrieve_topk,
)


def _index(rng, n=20, dim=4, scene_id="s"):
    embeddings = rng.normal(size=(n, dim))
    embeddings /= np.linalg.norm(embeddings, axis=1, keepdims=True)
    return RetrievalIndex(scene_id, np.arange(n) * 3 + 1, embeddings)


class TestRankingLoss:

    def test_all_equal_similarity(self):
        loss = ranking_loss_from_similarity(Tensor(np.zeros((2, 2))), margin=0.25)
        assert loss.item() == pytest.approx(1.0)

    def test_separated_pairs_cost_nothing(self):
        similarity = np.full((3, 3), -1.0) + 2.0 * np.eye(3)
        assert ranking_loss_from_similarity(Tensor(similarity), margin=0.35).item() == 0.0

    def test_single_pair_has_no_negatives(self):
        assert ranking_loss_from_similarity(Tensor(np.ones((1, 1))), margin=0.35).item() == 0.0

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            ranking_loss_from_similarity(Tensor(np.zeros((2, 3))), margin=0.1)

    def test_gradient(self):
        rng = np.random.default_rng(0)
        cells = Tensor(rng.normal(size=(4, 5)))
        texts = Tensor(rng.normal(size=(4, 5)))
        result = finite_diff_check(lambda c: ranking_loss(c, texts, 0.35), cells)
        assert result.passed, str(result)
        result = finite_diff_check(lambda t: ranking_loss(cells, t, 0.35), texts)
        assert result.passed, str(result)


class TestRetrieval:

    def test_topk_matches_brute_force(self):
        rng = np.random.default_rng(1)
        index = _index(rng)
        for query in rng.normal(size=(25, 4)):
            top = retrieve_topk(query, index, 5)
            q = query / np.linalg.norm(query)
            distances = np.linalg.norm(index.embeddings - q, axis=1)
            expected = sorted(zip(distances, index.cell_ids))[:5]
            assert top.cell_ids.tolist() == [int(c) for _, c in expected]
            np.testing.assert_allclose(top.distances, [d for d, _ in expected], atol=1e-9)
            assert not top.truncated

    def test_ties_break_by_lowest_id(self):
        embeddings = np.tile([1.0, 0.0], (4, 1))
        index = RetrievalIndex("s", [9, 2, 7, 4], embeddings)
        assert retrieve_topk(np.array([0.0, 1.0]), index, 3).cell_ids.tolist() == [2, 4, 7]

    def test_truncation_and_empty_index(self):
        rng = np.random.default_rng(2)
        index = _index(rng, n=3)
        top = retrieve_topk(rng.normal(size=4), index, 10)
        assert len(top.cell_ids) == 3 and top.truncated
        empty = RetrievalIndex("e", np.zeros(0, dtype=np.int64), np.zeros((0, 4)))
        assert len(retrieve_topk(rng.normal(size=4), empty, 1).cell_ids) == 0
        with pytest.raises(ValueError):
            retrieve_topk(rng.normal(size=4), index, 0)

    def test_batch_agrees_with_single(self):
        rng = np.random.default_rng(3)
        index = _index(rng)
        queries = rng.normal(size=(6, 4))
        for query, top in zip(queries, retrieve_batch(queries, index, 4)):
            assert top.cell_ids.tolist() == retrieve_topk(query, index, 4).cell_ids.tolist()

    def test_index_from_database(self, cell_db, small_config, vocab, tmp_path):
        params = init_coarse_params(small_config.encoder, len(vocab), seed=0)
        P = small_config.encoder.points_per_instance
        index = build_index(params, cell_db, P, config={"stride": cell_db.stride})
        assert len(index) == len(cell_db)
        np.testing.assert_array_equal(index.cell_ids, cell_db.ids())
        np.testing.assert_allclose(np.linalg.norm(index.embeddings, axis=1), 1.0)
        chunked = embed_cells(params, cell_db, P, batch_size=7)
        np.testing.assert_allclose(chunked, embed_cells(params, cell_db, P), atol=1e-12)

        loaded = RetrievalIndex.load(index.save(tmp_path / "index.tlck"))
        assert loaded.scene_id == index.scene_id
        assert loaded.config == {"stride": cell_db.stride}
        np.testing.assert_array_equal(loaded.cell_ids, index.cell_ids)
        np.testing.assert_array_equal(loaded.embeddings, index.embeddings)

    def test_non_finite_embeddings_rejected(self):
        with pytest.raises(ValueError):
            RetrievalIndex("s", [0], np.array([[np.nan, 0.0]]))


class TestCoarseTraining:

    def test_recall_bounds(self, grounded, cell_db, small_config, vocab):
        params = init_coarse_params(small_config.encoder, len(vocab), seed=0)
        recall = coarse_recall(
            params, grounded, {cell_db.scene_id: cell_db}, vocab, small_config.encoder.points_per_instance, 15.0
        )
        assert 0.0 <= recall <= 1.0
        assert coarse_recall(params, [], {}, vocab, 8, 15.0) == 0.0

    def test_training_keeps_a_recorded_epoch(self, grounded, cell_db, small_config, vocab, tmp_path):
        databases = {cell_db.scene_id: cell_db}
        trainer = CoarseTrainer(small_config, vocab)
        result = trainer.train(grounded, databases, grounded[:10], databases, tmp_path / "coarse.csv")
        assert len(result.history) == small_config.coarse.epochs
        assert 1 <= result.best_epoch <= small_config.coarse.epochs
        assert all(np.isfinite(m.loss) for m in result.history)
        lines = (tmp_path / "coarse.csv").read_text().splitlines()
        assert lines[0] == "epoch,loss,val_recall"
        assert len(lines) == small_config.coarse.epochs + 1

    @pytest.mark.slow
    def test_overfits_one_batch(self, grounded, cell_db, vocab):
        config = experiment.load(None, [
            "coarse.lr=0.01",
            "coarse.shuffle_hints=false",
            "coarse.flip_cells=false",
            "coarse.rotate_instances=false",
            "encoder.embed_dim=16",
            "encoder.points_per_instance=8",
        ])
        picked, seen = [], set()
        for query in grounded:
            text = " ".join(h.text for h in query.description.hints)
            if query.cell_id not in seen and text not in seen:
                picked.append(query)
                seen.update([query.cell_id, text])
            if len(picked) == 4:
                break
        assert len(picked) == 4
        cells = [cell_db.cell(q.cell_id) for q in picked]
        descriptions = [q.description for q in picked]
        trainer = CoarseTrainer(config, vocab)
        losses = [trainer.train_batch(cells, descriptions) for _ in range(200)]
        assert losses[-1] < 0.25 * losses[0]

    @pytest.mark.slow
    def test_retrieves_distinct_training_cells(self, make_distinct_set, vocab):
        config = experiment.load(None, [
            "coarse.lr=0.01",
            "coarse.epochs=64",
            "coarse.batch_size=8",
            "coarse.shuffle_hints=false",
            "coarse.flip_cells=false",
            "coarse.rotate_instances=false",
            "encoder.embed_dim=32",
            "encoder.points_per_instance=8",
        ])
        databases, queries = make_distinct_set(32, seed=5)
        result = CoarseTrainer(config, vocab).train(queries, databases)
        index = build_index(result.params, databases["distinct"], config.encoder.points_per_instance)
        texts = encode_descriptions(result.params, description_batch([q.description for q in queries], vocab)).data
        top1 = [int(retrieve_topk(text, index, 1).cell_ids[0]) for text in texts]
        accuracy = np.mean([cell_id == q.cell_id for cell_id, q in zip(top1, queries)])
        assert accuracy >= 0.9
