"""
Streamlit Frontend for Multi-Intent Parsing
===========================================

Interactive demo: parse a typed utterance with a trained checkpoint, and
inspect intent co-occurrence statistics of an uploaded corpus.

Run with ``streamlit run src/gslu/app_main.py`` or ``python app.py``.
"""

import sys
import tempfile
from pathlib import Path

import pandas as pd
import streamlit as st

# Allow running as a script from the repository root
src_path = Path(__file__).resolve().parent.parent
if str(src_path) not in sys.path:
    sys.path.insert(0, str(src_path))

from gslu.checkpoint import load_checkpoint
from gslu.config import STREAMLIT_CONFIG
from gslu.corpus import read_corpus
from gslu.dataset_builder import cooccurrence_matrix
from gslu.decoding import parse_utterance
from gslu.errors import GSLUError, ValidationError


def setup_page():
    """Configure Streamlit page settings."""
    st.set_page_config(**STREAMLIT_CONFIG)


def display_header():
    st.markdown("<h1 style='text-align: center;'>Multi-Intent Parser</h1>", unsafe_allow_html=True)
    st.markdown("<p style='text-align: center; color: #888;'>Intents and slots generated as one sequence</p>",
                unsafe_allow_html=True)


@st.cache_resource
def cached_model(path: str):
    return load_checkpoint(path)


def display_sidebar():
    """Checkpoint selection and decoding switches."""
    st.sidebar.markdown("### Model")
    path = st.sidebar.text_input("Checkpoint path", value="runs/best.gslu")
    constrained = st.sidebar.checkbox("Grammar-constrained decoding", value=True)
    st.sidebar.markdown("---")
    st.sidebar.caption("Train a checkpoint with `python -m gslu train --train ... --dev ...`.")
    return path, constrained


def prediction_frame(prediction, tokens) -> pd.DataFrame:
    """One row per predicted slot, with the covered words."""
    rows = [
        {'slot': s.category, 'start': s.start, 'end': s.end, 'value': " ".join(tokens[s.start:s.end])}
        for s in prediction.target.slots
    ]
    return pd.DataFrame(rows, columns=['slot', 'start', 'end', 'value'])


def display_parser(path: str, constrained: bool):
    st.markdown("### Parse an Utterance")
    text = st.text_input("Utterance", placeholder="play some jazz and what is the weather in paris",
                         label_visibility="collapsed")
    if not st.button("Parse", type="primary"):
        return
    if not text.strip():
        st.error("Please enter an utterance.")
        return
    try:
        model, info = cached_model(path)
        prediction = parse_utterance(text, model, constrained=constrained)
    except ValidationError as e:
        st.error(f"INPUT ERROR: {e}")
        return
    except (GSLUError, OSError) as e:
        st.error(f"SYSTEM ERROR: {e}")
        return

    col1, col2 = st.columns([1, 2])
    with col1:
        st.metric(label="Intents", value=len(prediction.target.intents))
        for intent in prediction.target.intents:
            st.markdown(f"- **{intent}**")
    with col2:
        st.dataframe(prediction_frame(prediction, text.split()), use_container_width=True)
    if prediction.truncated:
        st.warning("Generation hit the step budget; showing the longest valid prefix.")
    if prediction.malformed:
        st.warning("Unconstrained output did not parse; nothing was extracted.")
    st.caption(f"Checkpoint epoch {info.epoch}, learning rate {info.learning_rate:g}")


def display_cooccurrence():
    st.markdown("---")
    st.markdown("### Intent Co-occurrence")
    upload = st.file_uploader("Corpus file", type=["txt", "tsv"])
    if upload is None:
        return
    with tempfile.NamedTemporaryFile(suffix=".txt", delete=False) as tmp:
        tmp.write(upload.getvalue())
    try:
        corpus = read_corpus(tmp.name)
    except GSLUError as e:
        st.error(f"INPUT ERROR: {e}")
        return
    finally:
        Path(tmp.name).unlink(missing_ok=True)
    report = cooccurrence_matrix(corpus)
    st.write(f"**Utterances:** {len(corpus)}")
    st.dataframe(report.counts, use_container_width=True)
    st.markdown("**Uniformity per intent (chi-square against an even spread):**")
    st.dataframe(report.uniformity, use_container_width=True)


def main():
    """Main application entry point."""
    setup_page()
    display_header()
    path, constrained = display_sidebar()
    display_parser(path, constrained)
    display_cooccurrence()


if __name__ == "__main__":
    main()
