#!/usr/bin/env python3
"""Regenerates the synthetic corpus under data/fixtures/.

Output is deterministic; rerun after editing the pools below.
"""
import json
import pathlib
import random

ROOT = pathlib.Path(__file__).resolve().parents[2]
OUT = ROOT / "data" / "fixtures"

TOTAL_DIALOGUES = 550
RETAINED = 324  # dialogues with more than 30 turns

ZH_NAMES = {
    "co": "认可", "gi": "提供信息", "rr": "合理的请求", "ex": "扩展", "re": "重构",
    "ec": "表达困惑", "de": "防卫个人观点", "sh": "自我批评或无望", "st": "转移话题",
    "fd": "焦点分离", "sa": "讽刺性的回答", "ot": "其他",
}
EN_NAMES = {
    "co": "Confirming", "gi": "Providing Information", "rr": "Reasonable Request",
    "ex": "Extending", "re": "Reformulating", "ec": "Expressing Confusion",
    "de": "Defending", "sh": "Self-criticism or Hopelessness", "st": "Shifting Topics",
    "fd": "Focus Disconnection", "sa": "Sarcastic Answer", "ot": "Other",
}

ZH_CLIENT = {
    "co": ["嗯，是的。", "对，就是这样。", "您说得没错。"],
    "gi": ["我在杭州上班，住得离公司很远。", "最近每天只睡四五个小时。", "我叫李华，今年二十六岁。",
           "上个月换了部门，同事都不太熟。", "有事可以打我电话13812345678。"],
    "rr": ["能不能教我一些放松的方法？", "下次可以约在周末吗？"],
    "ex": ["而且晚上总会想很多事情。", "其实不光是工作，家里也有压力。", "我妈妈也一直催我回北京。"],
    "re": ["也许我可以先试着和领导谈谈。", "我好像一直把问题都归到自己身上。"],
    "ec": ["我不太明白您的意思。", "这个和我的问题有什么关系呢？"],
    "de": ["可我真的已经很努力了。", "这不是我的错，是他们要求太高。"],
    "sh": ["我觉得自己什么都做不好。", "可能我就是这样的人吧。"],
    "st": ["对了，我最近还在考虑换工作。", "说起来，我朋友王芳也有类似的情况。"],
    "fd": ["嗯……刚才说到哪儿了？", "不好意思，我有点走神。"],
    "sa": ["哈，那可真是太好了。", "是啊，我可真是个幸运儿。"],
    "ot": ["嗯。", "好吧。"],
}
EN_CLIENT = {
    "co": ["Yes, that's right.", "Exactly."],
    "gi": ["I work in Shanghai and commute two hours a day.", "I've been sleeping about five hours a night."],
    "rr": ["Could you teach me some breathing exercises?", "Can we meet on Saturday next time?"],
    "ex": ["And it gets worse at night.", "It's not only work, my family is stressful too."],
    "re": ["Maybe I could talk to my manager first.", "I guess I always blame myself."],
    "ec": ["I don't quite follow you.", "How is that related to my problem?"],
    "de": ["But I really have tried my best.", "It's not my fault, they expect too much."],
    "sh": ["I can't do anything right.", "Maybe I'm just like this."],
    "st": ["By the way, I'm thinking about changing jobs.", "My friend Zhang Wei has the same issue."],
    "fd": ["Sorry, where were we?", "I lost my train of thought."],
    "sa": ["Oh great, that's just wonderful.", "Sure, lucky me."],
    "ot": ["Hmm.", "Okay."],
}
ZH_COUNSELOR = ["你好，今天想聊些什么？", "能具体说说吗？", "听起来你最近压力很大。", "那时候你是什么感受？",
                "你刚才提到了家人，可以多讲讲吗？", "你觉得这件事对你影响最大的是什么？", "嗯，我在听。",
                "我们一起来看看有什么办法。"]
EN_COUNSELOR = ["Hi, what would you like to talk about today?", "Could you tell me more?",
                "It sounds like you've been under a lot of stress.", "How did you feel at that moment?",
                "You mentioned your family, can you say more?", "I'm listening."]

CODES = list(ZH_NAMES)


def label_text(labels, lang, rng):
    """Annotation in one of the styles seen in the corpus."""
    style = rng.randrange(4)
    if lang == "en":
        return ", ".join(EN_NAMES[c] for c in labels) if style < 3 else ",".join(labels)
    if style == 0:
        return "，".join(ZH_NAMES[c] for c in labels)
    if style == 1:
        return "（" + "，".join(ZH_NAMES[c] for c in labels) + "）"
    if style == 2:
        return "、".join(ZH_NAMES[c] for c in labels)
    return ",".join("pi" if c == "gi" and rng.random() < 0.5 else c for c in labels)


def client_turn(labels, lang, rng):
    pool = ZH_CLIENT if lang == "zh" else EN_CLIENT
    sep = "" if lang == "zh" else " "
    text = sep.join(rng.choice(pool[c]) for c in labels)
    return {"speaker": "client", "utterance": text, "labels": label_text(labels, lang, rng)}


def counselor_turn(lang, rng):
    pool = ZH_COUNSELOR if lang == "zh" else EN_COUNSELOR
    return {"speaker": "counselor", "utterance": rng.choice(pool), "labels": None}


def random_labels(rng):
    k = rng.choices([1, 2, 3], weights=[6, 3, 1])[0]
    return [rng.choice(CODES) for _ in range(k)]


def dialogue(did, turn_count, client_first, lang, rng, planned=None):
    turns = []
    planned = list(planned or [])
    for i in range(turn_count):
        is_client = (i % 2 == 0) == client_first
        if is_client:
            labels = planned.pop(0) if planned else random_labels(rng)
            turns.append(client_turn(labels, lang, rng))
        else:
            turns.append(counselor_turn(lang, rng))
    return {"id": did, "turns": turns, "turn_count": turn_count}


# The first retained dialogue becomes trajectory t1: 31 turns, client first,
# so 16 client turns; turn 3 is the two-behavior [co, ex] turn.
T1_PLAN = [["gi"], ["co", "gi"], ["co", "ex"], ["ex"], ["gi", "co", "gi"], ["ec"], ["de"], ["sh"],
           ["re"], ["rr"], ["st"], ["fd"], ["sa"], ["gi", "ex"], ["ot"], ["co"]]


def build_dialogues():
    rng = random.Random(20240531)
    fixed = [
        dialogue("d0001", 31, True, "zh", rng, T1_PLAN),
        dialogue("d0002", 30, False, "zh", rng),
        dialogue("d0003", 31, False, "en", rng),
    ]
    retained_left = RETAINED - 2
    rejected_left = TOTAL_DIALOGUES - RETAINED - 1
    kinds = ["keep"] * retained_left + ["drop"] * rejected_left
    rng.shuffle(kinds)
    out = list(fixed)
    for n, kind in enumerate(kinds, start=4):
        turns = rng.randint(31, 40) if kind == "keep" else rng.randint(6, 30)
        lang = "en" if rng.random() < 0.15 else "zh"
        out.append(dialogue(f"d{n:04d}", turns, rng.random() < 0.3, lang, rng))
    return out


PROFILE_SECTIONS_ZH = [
    ("p1", "academic stress", {
        "basic_info": "女，22岁，大学四年级学生，独生女。",
        "presenting_problem": "临近毕业，论文进展缓慢，常常失眠，担心找不到工作。",
        "problem_development": "大三下学期开始焦虑，最近两个月明显加重，白天注意力难以集中。",
        "speaking_style": "说话较慢，常用“可能”“好像”，不太主动表达情绪。",
        "family_background": "父母都是中学教师，对学业要求严格。",
    }),
    ("p2", "workplace stress", {
        "basic_info": "男，31岁，互联网公司产品经理，已婚。",
        "presenting_problem": "工作压力大，经常加班，和妻子争吵增多。",
        "problem_development": "半年前升职后任务翻倍，逐渐出现易怒、头痛。",
        "speaking_style": "语速快，习惯讲道理，偶尔带点讽刺。",
        "relationships": "和妻子结婚三年，最近沟通减少。",
        "lifestyle": "每天工作十二小时，很少运动。",
    }),
    ("p3", "romantic breakup", {
        "basic_info": "女，27岁，护士，单身。",
        "presenting_problem": "三个月前分手，至今难以走出，觉得自己不值得被爱。",
        "problem_development": "分手后情绪低落，食欲下降，开始回避朋友聚会。",
        "speaking_style": "情绪化，容易自责，说话时常停顿。",
    }),
]
PROFILE_SECTIONS_EN = [
    ("p4", "social anxiety", {
        "basic_info": "Male, 24, graduate student, lives alone.",
        "presenting_problem": "Avoids seminars and group meals; feels judged whenever he speaks.",
        "problem_development": "Shy since middle school; worse after a failed presentation last spring.",
        "speaking_style": "Short answers, hedges a lot, apologizes often.",
        "physical_condition": "Reports heart pounding and sweating before class.",
    }),
    ("p5", "parent-child conflict", {
        "basic_info": "Female, 45, accountant, mother of a 16-year-old son.",
        "presenting_problem": "Constant arguments with her son about grades and phone use.",
        "problem_development": "Conflicts began when the son entered high school and escalated this year.",
        "speaking_style": "Detailed, anxious, tends to list examples.",
        "family_background": "Husband works abroad and is home twice a year.",
    }),
]


def build_profiles():
    out = []
    for pid, topic, sections in PROFILE_SECTIONS_ZH + PROFILE_SECTIONS_EN:
        raw = "\n".join(sections.values())
        out.append({"id": pid, "topic": topic, "sections": sections, "raw_text": raw,
                    "char_count": len(raw)})
    return out


SCRIPT_ZH = ["你好，今天想聊些什么？", "能具体说说吗？", "听起来你最近压力很大。", "那时候你是什么感受？",
             "你刚才提到了家人，可以多讲讲吗？", "你觉得这件事对你影响最大的是什么？", "嗯，我在听。",
             "我们一起来看看有什么办法。", "你以前遇到类似的情况是怎么处理的？", "这种情况持续多久了？",
             "你希望通过咨询得到什么？", "如果用一个词形容现在的心情，会是什么？", "你身边有可以倾诉的人吗？",
             "我们今天先聊到这里，你觉得怎么样？", "下次见面前你可以试着记录一下睡眠。", "谢谢你的信任。",
             "还有什么想补充的吗？", "好的，我们下周见。"]


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    dialogues = build_dialogues()
    assert len(dialogues) == TOTAL_DIALOGUES
    assert sum(d["turn_count"] > 30 for d in dialogues) == RETAINED
    write_jsonl(OUT / "dialogues.jsonl", dialogues)
    write_jsonl(OUT / "profiles.jsonl", build_profiles())
    (OUT / "script_zh.txt").write_text("\n".join(SCRIPT_ZH) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
