import pytest

from sceneloop.captions import SceneCaption
from sceneloop.prompts import (
    InstrumentCapViolation,
    InstrumentSelection,
    SessionLock,
    build_prompt,
    section_modifier,
    variation_tag,
)

PAPER_EXAMPLE = (
    "keys, guitar section, purple neon street light sign at night, "
    "moody, lush, ambient chill, steady groove, subtle variation, "
    "same sound palette as previous section"
)

NIGHT_STREET = SceneCaption(
    description="purple neon street light sign at night",
    objects=("street light sign",),
    mood=("moody", "lush"),
    section_role="verse",
    genre="ambient chill",
    bpm=90,
)


class TestInstrumentSelection:
    def test_valid_sizes(self):
        InstrumentSelection(("bass",))
        InstrumentSelection(("keys", "guitar", "percussion"))

    def test_zero_rejected(self):
        with pytest.raises(InstrumentCapViolation):
            InstrumentSelection(())

    def test_four_rejected(self):
        with pytest.raises(InstrumentCapViolation):
            InstrumentSelection(("keys", "guitar", "bass", "percussion"))

    def test_duplicates_rejected(self):
        with pytest.raises(InstrumentCapViolation):
            InstrumentSelection(("keys", "keys"))

    def test_unknown_rejected(self):
        with pytest.raises(InstrumentCapViolation):
            InstrumentSelection(("theremin",))

    def test_parse(self):
        assert InstrumentSelection.parse("keys, guitar").instruments == ("keys", "guitar")


class TestModifiers:
    def test_chorus(self):
        assert section_modifier("chorus") == "higher energy, catchy hook"

    def test_outro(self):
        assert section_modifier("outro") == "winding down"

    def test_intro(self):
        assert section_modifier("intro") == "sparse, building anticipation"

    def test_verse(self):
        assert section_modifier("verse") == "steady groove"

    def test_bridge(self):
        assert section_modifier("bridge") == "contrasting texture, tension"

    def test_unknown_role(self):
        with pytest.raises(ValueError):
            section_modifier("drop")


class TestVariationTags:
    def test_rotation(self):
        assert variation_tag(1) == "subtle variation"
        assert variation_tag(2) == "motif development"
        assert variation_tag(3) == "steady groove"
        assert variation_tag(4) == "new countermelody"
        assert variation_tag(5) == "subtle variation"

    def test_invalid_for_first_section(self):
        with pytest.raises(ValueError):
            variation_tag(0)


class TestBuildPrompt:
    def test_paper_example_golden(self):
        sel = InstrumentSelection(("keys", "guitar"))
        lock = SessionLock(genre="ambient chill", bpm=90)
        record = build_prompt(NIGHT_STREET, sel, 1, lock)
        assert record.text == PAPER_EXAMPLE

    def test_single_instrument_intro_no_variation(self):
        cap = SceneCaption(
            description="sunrise over hills",
            objects=("hills",),
            mood=("calm",),
            section_role="intro",
            genre="folk",
            bpm=80,
        )
        record = build_prompt(cap, InstrumentSelection(("bass",)), 0)
        assert "sparse, building anticipation" in record.text
        assert "variation" not in record.text
        assert "same sound palette" not in record.text
        assert record.text.startswith("bass section, ")

    def test_locked_genre_wins_after_first_section(self):
        cap = SceneCaption(
            description="storm clouds",
            objects=(),
            mood=("dark",),
            section_role="bridge",
            genre="dubstep",  # advisory once the session is locked
            bpm=140,
        )
        record = build_prompt(
            cap, InstrumentSelection(("keys",)), 2, SessionLock("ambient chill", 90)
        )
        assert "ambient chill" in record.text
        assert "dubstep" not in record.text

    def test_locked_required_for_later_sections(self):
        with pytest.raises(ValueError):
            build_prompt(NIGHT_STREET, InstrumentSelection(("keys",)), 1, None)

    def test_pure_function(self):
        sel = InstrumentSelection(("keys", "guitar"))
        lock = SessionLock("ambient chill", 90)
        a = build_prompt(NIGHT_STREET, sel, 1, lock)
        b = build_prompt(NIGHT_STREET, sel, 1, lock)
        assert a == b

    def test_contains_all_instruments_never_others(self):
        cap = NIGHT_STREET
        record = build_prompt(cap, InstrumentSelection(("bass", "percussion")), 0)
        assert "bass" in record.text and "percussion" in record.text
        assert "keys" not in record.text and "guitar" not in record.text

    def test_continuity_tag_for_all_later_sections(self):
        lock = SessionLock("ambient chill", 90)
        for k in range(1, 6):
            record = build_prompt(NIGHT_STREET, InstrumentSelection(("keys",)), k, lock)
            assert record.text.endswith("same sound palette as previous section")

    def test_mood_capped_at_three(self):
        cap = SceneCaption(
            description="parade",
            objects=(),
            mood=("loud", "bright", "busy", "chaotic", "joyful"),
            section_role="chorus",
            genre="brass band",
            bpm=120,
        )
        record = build_prompt(cap, InstrumentSelection(("percussion",)), 0)
        assert "chaotic" not in record.text and "joyful" not in record.text
        assert "busy" in record.text

    def test_token_budget(self):
        cap = SceneCaption(
            description="a very long panoramic view of the waterfront at dusk with boats",
            objects=("boats",),
            mood=("wistful", "warm", "hazy"),
            section_role="bridge",
            genre="cinematic downtempo",
            bpm=70,
        )
        record = build_prompt(
            cap, InstrumentSelection(("keys", "guitar", "bass")), 5,
            SessionLock("cinematic downtempo", 70),
        )
        assert len(record.text.split()) <= 64

    def test_parts_join_invariant(self):
        record = build_prompt(
            NIGHT_STREET, InstrumentSelection(("keys", "guitar")), 1,
            SessionLock("ambient chill", 90),
        )
        assert ", ".join(p for _, p in record.parts) == record.text
        labels = [label for label, _ in record.parts]
        assert labels == [
            "instrument", "role", "scene", "mood", "mood", "genre",
            "modifier", "variation", "continuity",
        ]
