import subprocess
import sys

import pytest

CORPUS_LINES = [
    f"the {ship} {verb} the {place} {thing} at {time}"
    for ship in ("petrel", "kestrel", "gannet", "osprey", "curlew", "brant")
    for verb, place, thing, time in zip(
        ("left", "passed", "cleared", "entered", "rounded", "sighted"),
        ("northern", "southern", "eastern", "western", "outer", "inner"),
        ("harbor", "jetty", "channel", "buoy", "reach", "quay"),
        ("dawn", "dusk", "noon", "midnight", "morning", "evening"),
    )
] + [
    f"{weather} kept the {ship} near the {place} {thing} until {time}"
    for weather in ("fog", "rain", "wind", "frost")
    for ship, place, thing, time in zip(
        ("petrel", "kestrel", "gannet", "osprey", "curlew", "brant"),
        ("upper", "lower", "outer", "inner", "northern", "southern"),
        ("jetty", "harbor", "buoy", "quay", "reach", "channel"),
        ("noon", "dawn", "dusk", "evening", "morning", "midnight"),
    )
]


@pytest.fixture(scope="session")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.txt"
    path.write_text("\n".join(CORPUS_LINES) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def server_port(corpus_file):
    """A bridge server subprocess on an ephemeral port, shared by the session."""
    proc = subprocess.Popen(
        [sys.executable, "-m", "icdbridge", "--model", f"ngram:{corpus_file}", "--port", "0"],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    line = proc.stdout.readline().strip()
    assert line.startswith("LISTENING "), f"unexpected server banner: {line!r}"
    port = int(line.split()[1])
    yield port
    proc.terminate()
    proc.wait(timeout=10)
