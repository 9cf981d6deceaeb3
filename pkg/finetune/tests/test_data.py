import json

import pytest

from chainworld_finetune.data import (
    NEWLINE_TOKEN,
    PairFormatError,
    WordTokenizer,
    load_pairs,
)


class TestLoadPairs:
    def test_loads_toy_pairs(self, toy_pairs):
        assert len(toy_pairs) == 20
        assert all(p.direction == "precondition" for p in toy_pairs)
        assert all(p.target for p in toy_pairs)

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text(
            '{"input": "a", "target": "b", "direction": "effect"}\nnot json\n',
            encoding="utf-8",
        )
        with pytest.raises(PairFormatError, match="line 2"):
            load_pairs(path)

    def test_missing_key_names_line(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text(json.dumps({"input": "a", "target": "b"}) + "\n", encoding="utf-8")
        with pytest.raises(PairFormatError, match="line 1"):
            load_pairs(path)

    def test_empty_target_rejected(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text(
            json.dumps({"input": "a", "target": " ", "direction": "effect"}) + "\n",
            encoding="utf-8",
        )
        with pytest.raises(PairFormatError, match="empty target"):
            load_pairs(path)

    def test_direction_filter(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        rows = [
            {"input": "a", "target": "x", "direction": "effect"},
            {"input": "b", "target": "y", "direction": "precondition"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
        assert len(load_pairs(path, direction="effect")) == 1
        # an absent direction leaves nothing, which is an error
        path2 = tmp_path / "one.jsonl"
        path2.write_text(json.dumps(rows[0]) + "\n", encoding="utf-8")
        with pytest.raises(PairFormatError):
            load_pairs(path2, direction="precondition")


class TestWordTokenizer:
    def test_roundtrips_targets_exactly(self, toy_pairs):
        tokenizer = WordTokenizer.fit(
            [p.input for p in toy_pairs] + [p.target for p in toy_pairs]
        )
        for pair in toy_pairs:
            assert tokenizer.decode(tokenizer.encode(pair.target)) == pair.target

    def test_newlines_become_tokens(self):
        tokenizer = WordTokenizer.fit(["a b\nc"])
        assert NEWLINE_TOKEN in tokenizer.vocab
        assert tokenizer.decode(tokenizer.encode("a b\nc")) == "a b\nc"

    def test_unknown_words_map_to_unk(self):
        tokenizer = WordTokenizer.fit(["known words"])
        ids = tokenizer.encode("unknown thing", add_eos=False)
        assert ids == [tokenizer.unk_id, tokenizer.unk_id]

    def test_save_load(self, tmp_path):
        tokenizer = WordTokenizer.fit(["some words here"])
        tokenizer.save(tmp_path / "tok.json")
        loaded = WordTokenizer.load(tmp_path / "tok.json")
        assert loaded.vocab == tokenizer.vocab
