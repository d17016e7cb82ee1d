"""Hand-authored BVH fixture corpus, including degenerate cases."""

SINGLE_JOINT_ZERO = """\
HIERARCHY
ROOT Root
{
\tOFFSET 0.000000 0.000000 0.000000
\tCHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
}
MOTION
Frames: 1
Frame Time: 0.050000
0.0 0.0 0.0 0.0 0.0 0.0
"""

TWO_JOINT_CHAIN = """\
HIERARCHY
ROOT Base
{
\tOFFSET 0.0 0.0 0.0
\tCHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
\tJOINT Tip
\t{
\t\tOFFSET 0 10 0
\t\tCHANNELS 3 Zrotation Xrotation Yrotation
\t}
}
MOTION
Frames: 2
Frame Time: 0.040000
0 0 0 0 0 0 10 0 0
1 2 3 45 0 0 0 -30 0
"""

THREE_JOINT_FIVE_FRAMES = """\
HIERARCHY
ROOT Hips
{
\tOFFSET 0.0 90.0 0.0
\tCHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
\tJOINT Chest
\t{
\t\tOFFSET 0.0 30.5 1.25
\t\tCHANNELS 3 Zrotation Xrotation Yrotation
\t\tJOINT Head
\t\t{
\t\t\tOFFSET 0.0 25.0 -2.5
\t\t\tCHANNELS 3 Yrotation Xrotation Zrotation
\t\t\tEnd Site
\t\t\t{
\t\t\t\tOFFSET 0.0 12.0 0.0
\t\t\t}
\t\t}
\t}
}
MOTION
Frames: 5
Frame Time: 0.050000
0.0 90.0 0.0 0.0 0.0 0.0 0.0 0.0 0.0 0.0 0.0 0.0
0.5 90.1 -0.25 5.0 -3.0 1.5 10.0 2.0 -4.0 6.0 1.0 0.5
1.0 90.2 -0.50 10.0 -6.0 3.0 20.0 4.0 -8.0 12.0 2.0 1.0
1.5 90.3 -0.75 15.0 -9.0 4.5 30.0 6.0 -12.0 18.0 3.0 1.5
2.0 90.4 -1.00 20.0 -12.0 6.0 40.0 8.0 -16.0 24.0 4.0 2.0
"""

EMPTY_CLIP = """\
HIERARCHY
ROOT Solo
{
\tOFFSET 1.0 2.0 3.0
\tCHANNELS 6 Xposition Yposition Zposition Xrotation Yrotation Zrotation
}
MOTION
Frames: 0
Frame Time: 0.033333
"""

ALL_ROTATION_ORDERS = """\
HIERARCHY
ROOT A
{
\tOFFSET 0 0 0
\tCHANNELS 6 Xposition Yposition Zposition Xrotation Yrotation Zrotation
\tJOINT B
\t{
\t\tOFFSET 1 0 0
\t\tCHANNELS 3 Xrotation Zrotation Yrotation
\t\tJOINT C
\t\t{
\t\t\tOFFSET 0 1 0
\t\t\tCHANNELS 3 Yrotation Xrotation Zrotation
\t\t\tEnd Site
\t\t\t{
\t\t\t\tOFFSET 0 1 0
\t\t\t}
\t\t}
\t}
\tJOINT D
\t{
\t\tOFFSET -1 0 0
\t\tCHANNELS 3 Yrotation Zrotation Xrotation
\t\tJOINT E
\t\t{
\t\t\tOFFSET 0 1 0
\t\t\tCHANNELS 3 Zrotation Yrotation Xrotation
\t\t\tJOINT F
\t\t\t{
\t\t\t\tOFFSET 0 0 1
\t\t\t\tCHANNELS 3 Zrotation Xrotation Yrotation
\t\t\t}
\t\t}
\t}
}
MOTION
Frames: 3
Frame Time: 0.050000
0 0 0 10 20 30 -10 15 5 12 -8 3 7 6 5 -4 3 -2 1 0 9
1 0 0 11 21 31 -11 16 6 13 -9 4 8 7 6 -5 4 -3 2 1 10
2 0 0 12 22 32 -12 17 7 14 -10 5 9 8 7 -6 5 -4 3 2 11
"""

MESSY_WHITESPACE = """\
HIERARCHY
ROOT   Wobble
{
   OFFSET    0.5   -0.5    0.25
     CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation
}
MOTION
Frames:    2
Frame Time:   0.100000
  0.1   0.2 0.3    4 5 6
7 8
9 10 11 12
"""

FIXTURE_CORPUS = {
    "single_joint_zero": SINGLE_JOINT_ZERO,
    "two_joint_chain": TWO_JOINT_CHAIN,
    "three_joint_five_frames": THREE_JOINT_FIVE_FRAMES,
    "empty_clip": EMPTY_CLIP,
    "all_rotation_orders": ALL_ROTATION_ORDERS,
    "messy_whitespace": MESSY_WHITESPACE,
}
