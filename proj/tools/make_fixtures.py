#!/usr/bin/env python3
# Copyright 2026 The dialeval Authors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Regenerates the synthetic toy corpus under tests/fixtures/.

Utterances are drawn from a handful of topics. Word vectors cluster by topic,
contextual vectors add a sentence-level topic component, and ratings follow
whether the generated response stays on the query's topic.
"""

import json
import os
import random
import sys

STATIC_DIM = 12
CONTEXT_DIM = 16
SEED = 20190601

TOPICS = {
    "shopping": "buy shop clothes store price cheap dress shoes sale size".split(),
    "food": "eat dinner lunch restaurant pizza hungry cook menu soup rice".split(),
    "travel": "trip flight hotel ticket airport train visit beach passport luggage".split(),
    "work": "job office boss meeting salary project interview deadline report team".split(),
    "weather": "rain sunny cold warm snow umbrella wind cloudy forecast storm".split(),
    "health": "doctor sick medicine fever hospital headache rest pain cough appointment".split(),
}
FUNCTION = "i you we the a to is are do what how can would some please".split()


def fmt(x):
    return "%.8g" % x


def gauss_vec(rng, dim, scale=1.0):
    return [rng.gauss(0.0, scale) for _ in range(dim)]


def add(a, b, s=1.0):
    return [x + s * y for x, y in zip(a, b)]


class World:
    def __init__(self, rng):
        self.rng = rng
        self.topic_static = {t: gauss_vec(rng, STATIC_DIM) for t in TOPICS}
        self.topic_ctx = {t: gauss_vec(rng, CONTEXT_DIM) for t in TOPICS}
        self.word_topic = {w: t for t, ws in TOPICS.items() for w in ws}
        self.static = {}
        self.ctx_base = {}
        for w in sorted(self.word_topic) + FUNCTION:
            t = self.word_topic.get(w)
            if t is None:
                self.static[w] = gauss_vec(rng, STATIC_DIM, 0.3)
                self.ctx_base[w] = gauss_vec(rng, CONTEXT_DIM, 0.3)
            else:
                self.static[w] = add(self.topic_static[t], gauss_vec(rng, STATIC_DIM), 0.4)
                self.ctx_base[w] = add(self.topic_ctx[t], gauss_vec(rng, CONTEXT_DIM), 0.4)

    def sentence(self, topic, n_content, n_function):
        words = self.rng.sample(TOPICS[topic], n_content) + self.rng.sample(FUNCTION, n_function)
        self.rng.shuffle(words)
        return words

    def contextual(self, tokens):
        topics = [self.word_topic[w] for w in tokens if w in self.word_topic]
        context = [0.0] * CONTEXT_DIM
        for t in topics:
            context = add(context, self.topic_ctx[t], 1.0 / len(topics))
        return [add(add(self.ctx_base[w], context, 0.3), gauss_vec(self.rng, CONTEXT_DIM), 0.05)
                for w in tokens]


def pair_lines(world, count):
    lines = []
    topics = sorted(TOPICS)
    for _ in range(count):
        t = world.rng.choice(topics)
        q = world.sentence(t, world.rng.randint(2, 3), world.rng.randint(1, 3))
        r = world.sentence(t, world.rng.randint(2, 4), world.rng.randint(0, 2))
        lines.append((q, r))
    return lines


def dump_lines(world, utterances):
    out = []
    for uid, tokens in utterances:
        vectors = world.contextual(tokens)
        out.append('{"uid":%s,"tokens":%s,"vectors":[%s]}' % (
            json.dumps(uid), json.dumps(tokens, separators=(",", ":")),
            ",".join("[" + ",".join(fmt(x) for x in v) + "]" for v in vectors)))
    return out


def main(out_dir):
    rng = random.Random(SEED)
    world = World(rng)
    topics = sorted(TOPICS)

    train = pair_lines(world, 50)
    valid = pair_lines(world, 20)

    evals = []
    for i in range(20):
        t = rng.choice(topics)
        q = world.sentence(t, 2, 2)
        ref = world.sentence(t, 3, 1)
        quality = i % 3  # 0 on topic, 1 mixed, 2 off topic
        if quality == 0:
            gen = world.sentence(t, 3, 1)
            base = 4.5
        elif quality == 1:
            other = rng.choice([x for x in topics if x != t])
            gen = world.sentence(t, 1, 1) + world.sentence(other, 2, 0)
            base = 3.0
        else:
            other = rng.choice([x for x in topics if x != t])
            gen = world.sentence(other, 3, 1)
            base = 1.5
        ratings = [min(5, max(1, int(round(base + rng.uniform(-1.0, 1.0))))) for _ in range(3)]
        evals.append((q, gen, ref, ratings))

    os.makedirs(out_dir, exist_ok=True)

    def write(name, lines):
        with open(os.path.join(out_dir, name), "w", newline="\n") as f:
            f.write("".join(line + "\n" for line in lines))

    write("toy_pairs.tsv", [" ".join(q) + "\t" + " ".join(r) for q, r in train])
    write("toy_valid_pairs.tsv", [" ".join(q) + "\t" + " ".join(r) for q, r in valid])
    write("toy_eval.tsv", [" ".join(q) + "\t" + " ".join(g) + "\t" + " ".join(r) + "\t" +
                           ",".join(str(x) for x in ratings) for q, g, r, ratings in evals])

    vocab = sorted(world.static)
    write("toy_static.txt", ["%d %d" % (len(vocab), STATIC_DIM)] +
          [w + " " + " ".join(fmt(x) for x in world.static[w]) for w in vocab])

    write("toy_train_dump.jsonl", dump_lines(
        world, [u for i, (q, r) in enumerate(train) for u in (("q:%d" % i, q), ("r:%d" % i, r))]))
    write("toy_valid_dump.jsonl", dump_lines(
        world, [u for i, (q, r) in enumerate(valid) for u in (("q:%d" % i, q), ("r:%d" % i, r))]))
    write("toy_eval_dump.jsonl", dump_lines(
        world, [u for i, (q, g, r, _) in enumerate(evals)
                for u in (("ctx-q:%d" % i, q), ("gen:%d" % i, g), ("ref:%d" % i, r))]))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else
         os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tests", "fixtures"))
