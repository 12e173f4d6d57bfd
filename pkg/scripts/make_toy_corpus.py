"""Regenerate the bundled toy corpus and fixture knowledge graph.

The corpus is engineered against the token-hash embedding backend: texts
are built from explicit token lists so pairwise cosines (token overlap /
sqrt of lengths) land deliberately above or below the 0.8 edge threshold.
The firewall group is shaped so that plain cosine ranking and the
personalized-PageRank walk order the top-2 differently for query tq2:
tq2 sits closest to the lone ftp question t12, but t05 anchors a tight
ssh triangle whose circulating walk mass outranks t12.

Run from the repo root:  python3 scripts/make_toy_corpus.py [--check-only]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
DATA = REPO / "src" / "cqarag" / "data"

# 19-token shared core of the firewall group
FIREWALL_CORE = ("how can i configure firewall rule on my ubuntu server to "
                 "allow remote access and block other network traffic").split()

RECORDS = [
    # --- iso extraction group (train) -------------------------------------
    {
        "question_id": "t01",
        "tokens": ("how do i extract an iso file on ubuntu i downloaded an iso image "
                   "and want to extract the files inside it using the terminal").split(),
        "created_at": "2019-03-10T09:00:00Z",
        "answer": ("7-Zip is used to extract ISO files. Install the p7zip package "
                   "and run 7z x file.iso in the terminal. p7zip runs on Ubuntu."),
    },
    {
        "question_id": "t02",
        "tokens": ("how do i extract an iso archive on ubuntu i downloaded an iso image "
                   "and need to extract the files inside it using the terminal").split(),
        "created_at": "2019-05-21T10:30:00Z",
        "answer": ("Archive Manager is a built-in tool. Right click the iso and choose "
                   "open with Archive Manager to copy everything out of the image."),
    },
    {
        "question_id": "t03",
        "tokens": ("how do i extract an iso file on ubuntu i downloaded an iso image "
                   "and wish to extract the files inside it using the filemanager").split(),
        "created_at": "2019-08-02T14:00:00Z",
        "answer": ("Archive Manager is a built-in tool. 7-Zip is used to extract ISO files "
                   "too when you install the p7zip package from the repositories."),
    },
    {
        "question_id": "t04",
        "tokens": ("how do i mount an iso file on ubuntu i downloaded an iso image "
                   "and want to mount the files inside it using the terminal").split(),
        "created_at": "2020-01-15T08:45:00Z",
        "answer": ("mount is used to extract ISO files indirectly. Create a directory and run "
                   "sudo mount -o loop file.iso target then copy the contents."),
    },
    # --- firewall group: hub triangle + lone ftp question (train) ---------
    {
        "question_id": "t05",
        "tokens": FIREWALL_CORE + "ufw ssh openssh daemon login shell".split(),
        "created_at": "2019-04-01T12:00:00Z",
        "answer": ("ufw is a frontend for iptables. Run sudo ufw allow 22 so the openssh "
                   "daemon accepts remote logins. ufw runs on Ubuntu."),
    },
    {
        "question_id": "t06",
        "tokens": FIREWALL_CORE + "openssh daemon keys terminal password publickey".split(),
        "created_at": "2019-06-11T16:20:00Z",
        "answer": ("openssh is a remote login tool. Generate a key pair with ssh-keygen and "
                   "append the public key to authorized_keys on the server."),
    },
    {
        "question_id": "t07",
        "tokens": FIREWALL_CORE + "openssh daemon users session sshd config".split(),
        "created_at": "2020-02-19T11:10:00Z",
        "answer": ("sshd_config is a configuration file. Set AllowUsers in sshd_config and "
                   "restart the openssh daemon to limit which accounts may log in."),
    },
    {
        "question_id": "t12",
        "tokens": FIREWALL_CORE + "ftp transfer files passive vsftpd upload".split(),
        "created_at": "2020-03-05T09:30:00Z",
        "answer": ("vsftpd is a ftp server. Open ports 20 and 21 plus a passive range, then "
                   "set pasv_enable=YES in vsftpd.conf for file transfers."),
    },
    # --- log rotation group (train) ---------------------------------------
    {
        "question_id": "t08",
        "tokens": ("my script for rotating and compressing log files under var log misses "
                   "some files how do i debug the rotation loop on linux").split(),
        "created_at": "2019-09-09T07:00:00Z",
        "answer": ("logrotate is a builtin tool for this job. Put a stanza in "
                   "/etc/logrotate.d instead of a custom loop. logrotate runs on Linux."),
    },
    {
        "question_id": "t09",
        "tokens": ("my script for rotating and compressing log files under var log skips "
                   "some files how do i fix the rotation loop on linux").split(),
        "created_at": "2019-11-27T18:40:00Z",
        "answer": ("Quote your globs. The shell expands var log patterns before find runs, "
                   "so pass -name '*.log' in quotes to cover every file."),
    },
    {
        "question_id": "t10",
        "tokens": ("my script for rotating and compressing log files under var log misses "
                   "some files how do i schedule the rotation loop on cron").split(),
        "created_at": "2020-05-30T22:15:00Z",
        "answer": ("cron is a job scheduler. Run crontab -e and add the line "
                   "0 0 * * * /path/to/script.sh so it fires at midnight. cron runs on Linux."),
    },
    # --- package update group (train) -------------------------------------
    {
        "question_id": "t11",
        "tokens": ("how do i upgrade all packages on ubuntu after adding a repository "
                   "apt says some packages have been kept back during upgrade").split(),
        "created_at": "2019-07-14T13:05:00Z",
        "answer": ("apt is a package manager. Run sudo apt update then sudo apt full-upgrade "
                   "to resolve the kept back packages safely."),
    },
    {
        "question_id": "t13",
        "tokens": ("how do i upgrade all packages on ubuntu after adding a repository "
                   "apt says some packages have unmet dependencies during upgrade").split(),
        "created_at": "2020-08-22T10:00:00Z",
        "answer": ("aptitude is a package manager with a solver. Try sudo aptitude upgrade "
                   "and accept the first resolution that keeps your repository pins."),
    },
    {
        "question_id": "t14",
        "tokens": ("how do i downgrade all packages on ubuntu after adding a repository "
                   "apt says some packages have been broken since upgrade").split(),
        "created_at": "2020-10-01T15:50:00Z",
        "answer": ("apt-cache is used to inspect package versions. Run apt-cache policy pkg, then "
                   "sudo apt install pkg=version to pin the working build."),
    },
    # --- singleton (train): stays isolated in the graph -------------------
    {
        "question_id": "t15",
        "tokens": ("why does my laptop touchpad stop responding after suspend resume cycle "
                   "two finger scrolling gestures disappear until i reboot the machine").split(),
        "created_at": "2020-11-11T11:11:00Z",
        "answer": ("libinput is an input driver. Reload the module with sudo modprobe -r "
                   "psmouse and sudo modprobe psmouse after resume to recover gestures."),
    },
    # --- test queries (2021+) ----------------------------------------------
    {
        "question_id": "tq1",
        "tokens": ("how do i extract an iso file on ubuntu i downloaded an iso image "
                   "and want to extract the files inside it using the desktop").split(),
        "created_at": "2021-02-03T09:00:00Z",
        "answer": ("Archive Manager is a built-in tool. 7-Zip is used to extract ISO files "
                   "from the terminal after you install the p7zip package."),
    },
    {
        "question_id": "tq2",
        "tokens": FIREWALL_CORE + "ftp transfer files ssh ufw vsftpd".split(),
        "created_at": "2021-06-18T14:30:00Z",
        "answer": ("ufw is a frontend for iptables. Allow port 22 for the openssh daemon and "
                   "ports 20 21 for vsftpd so both ssh and ftp transfers pass."),
    },
    {
        "question_id": "tq3",
        "tokens": ("my script for rotating and compressing log files under var log misses "
                   "some files how do i schedule the rotation job on cron").split(),
        "created_at": "2022-01-25T06:00:00Z",
        "answer": ("cron is a job scheduler. Add 0 6 * * * /path/to/script.sh with crontab -e "
                   "so the rotation fires every morning. cron runs on Linux."),
    },
    {
        "question_id": "tq4",
        "tokens": ("how do i upgrade all packages on ubuntu after adding a repository "
                   "apt says some packages have been kept back since yesterday").split(),
        "created_at": "2022-09-12T17:45:00Z",
        "answer": ("apt is a package manager. Run sudo apt update and sudo apt full-upgrade; "
                   "kept back packages usually need the phased update to finish."),
    },
    {
        "question_id": "tq5",
        "tokens": ("strange clicking noise from spinning hard drive enclosure when writing "
                   "large backups should i worry about imminent disk failure now").split(),
        "created_at": "2023-03-29T20:10:00Z",
        "answer": ("smartctl is a diagnostic tool. Run sudo smartctl -a /dev/sdX and watch "
                   "the reallocated sector count; rising numbers mean replace the disk."),
    },
]

KG = {
    "entities": {
        "Ubuntu": {
            "id": "Q381",
            "aliases": ["ubuntu linux"],
            "statements": [["based on", "Debian"], ["developer", "Canonical"]],
        },
        "7-Zip": {
            "id": "Q286002",
            "aliases": ["p7zip", "7zip"],
            "statements": [["operating system", "Ubuntu"], ["instance of", "file archiver"]],
        },
        "Archive Manager": {
            "id": "Q2636674",
            "aliases": ["file-roller"],
            "statements": [["part of", "GNOME"], ["instance of", "a built-in tool"]],
        },
        "logrotate": {
            "id": "Q1191636",
            "aliases": [],
            "statements": [["operating system", "Linux"], ["written in", "C"]],
        },
        "cron": {
            "id": "Q341845",
            "aliases": ["crontab"],
            "statements": [["operating system", "Linux"], ["instance of", "a job scheduler"]],
        },
        "ufw": {
            "id": "Q2275054",
            "aliases": ["uncomplicated firewall"],
            "statements": [["operating system", "Ubuntu"], ["instance of", "a frontend for iptables"]],
        },
        "vsftpd": {
            "id": "Q1325933",
            "aliases": [],
            "statements": [["instance of", "a ftp server"], ["operating system", "Linux"]],
        },
        "apt": {
            "id": "Q281939",
            "aliases": ["apt-get"],
            "statements": [["instance of", "a package manager"], ["operating system", "Debian"]],
        },
        "openssh": {
            "id": "Q847119",
            "aliases": ["openssh daemon"],
            "statements": [["instance of", "a remote login tool"], ["operating system", "Linux"]],
        },
        "Debian": {
            "id": "Q7715973",
            "aliases": [],
            "statements": [["instance of", "a Linux distribution"]],
        },
        "Linux": {
            "id": "Q388",
            "aliases": [],
            "statements": [["instance of", "an operating system family"]],
        },
        "smartctl": {
            "id": "Q1504915",
            "aliases": [],
            "statements": [["part of", "smartmontools"], ["instance of", "a diagnostic tool"]],
        },
    }
}


def build_records() -> list[dict]:
    out = []
    for spec in RECORDS:
        tokens = spec["tokens"]
        title = " ".join(tokens[:7])
        body = " ".join(tokens[7:])
        out.append({
            "question_id": spec["question_id"],
            "title": title,
            "body": body,
            "tags": ["toy"],
            "created_at": spec["created_at"],
            "answers": [{
                "body": spec["answer"],
                "accepted": True,
                "created_at": spec["created_at"],
            }],
        })
    return out


def check(records: list[dict]) -> None:
    from datetime import datetime, timezone

    from cqarag.corpus import FilterConfig, filter_records, ingest, temporal_split
    from cqarag.embedding import EmbeddingVector, TokenHashEmbeddingBackend, cosine
    from cqarag.graph import build_graph, extend_with_query
    from cqarag.ppr import query_aware_pagerank, top_k

    import tempfile

    with tempfile.NamedTemporaryFile("w", suffix=".jsonl", delete=False) as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
        path = fh.name
    parsed = ingest(path)
    assert len(parsed) == 20, len(parsed)
    filtered = filter_records(parsed, FilterConfig())
    assert len(filtered) == 20, f"filter dropped {20 - len(filtered)} records"
    boundary = datetime(2021, 1, 1, tzinfo=timezone.utc)
    split = temporal_split(filtered, boundary)
    assert len(split.train) == 15 and len(split.test) == 5

    backend = TokenHashEmbeddingBackend(dim=1024)
    vectors = {
        r.question_id: EmbeddingVector.of(backend.embed([r.question_text()])[0])
        for r in split.train
    }
    graph = build_graph(vectors, threshold=0.8, backend_id=backend.backend_id)
    edge_set = {(a, b) for a, b, _ in graph.edges}
    print("edges:", sorted(edge_set))

    expected_clusters = [
        {"t01", "t02", "t03", "t04"},
        {"t05", "t06", "t07"},
        {"t08", "t09", "t10"},
        {"t11", "t13", "t14"},
    ]
    for cluster in expected_clusters:
        for a in cluster:
            for b in cluster:
                if a < b:
                    assert (a, b) in edge_set, f"missing intra-cluster edge {a}-{b}"
    for iso in ("t12", "t15"):
        assert not any(iso in e for e in edge_set), f"{iso} should be isolated"

    queries = {r.question_id: r for r in split.test}
    tq2 = queries["tq2"]
    qvec = EmbeddingVector.of(backend.embed([tq2.question_text()])[0])
    ext = extend_with_query(graph, qvec, vectors)
    sims = dict(ext.query_edges)
    print("tq2 query edges:", {k: round(v, 4) for k, v in sorted(sims.items())})
    assert set(sims) == {"t05", "t12"}, sims
    assert sims["t12"] > sims["t05"] + 0.02, "cosine must clearly prefer t12"

    result = query_aware_pagerank(ext, alpha=0.85, max_iter=100, tol=1e-6)
    graph_top = [qid for qid, _ in top_k(result, 2).items]
    cosine_top = sorted(sims, key=lambda q: (-sims[q], q))[:2]
    print("tq2 ppr top2:", graph_top, "cosine top2:", cosine_top)
    assert graph_top == ["t05", "t12"], graph_top
    assert cosine_top == ["t12", "t05"], cosine_top

    # every other connected query retrieves from its own group
    for qid, expect in [("tq1", {"t01", "t02", "t03", "t04"}),
                        ("tq3", {"t08", "t09", "t10"}),
                        ("tq4", {"t11", "t13", "t14"})]:
        qv = EmbeddingVector.of(backend.embed([queries[qid].question_text()])[0])
        e = extend_with_query(graph, qv, vectors)
        assert e.query_edges, f"{qid} disconnected"
        r = top_k(query_aware_pagerank(e), 2, query_id=qid)
        got = {q for q, _ in r.items}
        assert got <= expect, f"{qid}: {got} not within {expect}"

    qv5 = EmbeddingVector.of(backend.embed([queries["tq5"].question_text()])[0])
    e5 = extend_with_query(graph, qv5, vectors)
    assert e5.query_edges == [], "tq5 must be disconnected"
    print("all corpus checks passed")


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--check-only", action="store_true")
    args = parser.parse_args()

    records = build_records()
    check(records)
    if args.check_only:
        return 0
    DATA.mkdir(parents=True, exist_ok=True)
    with (DATA / "toy_corpus.jsonl").open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    (DATA / "toy_kg.json").write_text(json.dumps(KG, indent=2, ensure_ascii=False) + "\n",
                                      encoding="utf-8")
    print(f"wrote {DATA / 'toy_corpus.jsonl'} and {DATA / 'toy_kg.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
