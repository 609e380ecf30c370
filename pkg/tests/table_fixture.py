"""Recorded bench efficacy table used as arithmetic regression fixtures.

Each row: (channel label, TN, FN, TP, FP, sensitivity %, specificity %,
accuracy %).  Percentages are the published two-decimal values; the
metrics code must reproduce them within half of the last printed digit
(0.005 percentage points).
"""

EFFICACY_ROWS = [
    # single channel
    ("[10]", 1196, 450, 1737, 308, 79.42, 79.52, 79.46),
    ("[9]", 1345, 708, 1479, 159, 67.63, 89.43, 76.51),
    ("[8]", 1334, 699, 1488, 170, 68.04, 88.70, 76.46),
    ("[7]", 1349, 742, 1445, 155, 66.07, 89.69, 75.70),
    ("[6]", 1310, 772, 1415, 194, 64.70, 87.10, 73.83),
    ("[2]", 1379, 921, 1266, 125, 57.89, 91.69, 71.66),
    ("[5]", 1260, 908, 1279, 244, 58.48, 83.78, 68.79),
    ("[3]", 1424, 1186, 1001, 80, 45.77, 94.68, 65.70),
    ("[4]", 1381, 1148, 1039, 123, 47.51, 91.82, 65.56),
    # top twenty 2-channel
    ("[8 10]", 1242, 234, 1953, 262, 89.30, 82.58, 86.56),
    ("[6 10]", 1198, 203, 1984, 306, 90.72, 79.65, 86.21),
    ("[7 10]", 1212, 219, 1968, 292, 89.99, 80.59, 86.16),
    ("[9 10]", 1236, 249, 1938, 268, 88.61, 82.18, 85.99),
    ("[5 10]", 1214, 260, 1927, 290, 88.11, 80.72, 85.10),
    ("[6 7]", 1244, 323, 1864, 260, 85.23, 82.71, 84.20),
    ("[2 10]", 1136, 236, 1951, 368, 89.21, 75.53, 83.64),
    ("[8 9]", 1309, 447, 1740, 195, 79.56, 87.03, 82.61),
    ("[6 8]", 1277, 436, 1751, 227, 80.06, 84.91, 82.04),
    ("[6 9]", 1301, 497, 1690, 203, 77.27, 86.50, 81.03),
    ("[3 10]", 1162, 371, 1816, 342, 83.04, 77.26, 80.68),
    ("[5 7]", 1252, 462, 1725, 252, 78.88, 83.24, 80.66),
    ("[4 10]", 1209, 421, 1766, 295, 80.75, 80.39, 80.60),
    ("[5 9]", 1311, 524, 1663, 193, 76.04, 87.17, 80.57),
    ("[7 9]", 1305, 520, 1667, 199, 76.22, 86.77, 80.52),
    ("[4 9]", 1330, 549, 1638, 174, 74.90, 88.43, 80.41),
    ("[2 9]", 1188, 436, 1751, 316, 80.06, 78.99, 79.63),
    ("[5 8]", 1284, 543, 1644, 220, 75.17, 85.37, 79.33),
    ("[4 8]", 1318, 585, 1602, 186, 73.25, 87.63, 79.11),
    ("[5 6]", 1237, 523, 1664, 267, 76.09, 82.25, 78.60),
    # top twenty 3-channel
    ("[6 8 10]", 1249, 188, 1999, 255, 91.40, 83.05, 88.00),
    ("[4 6 10]", 1208, 151, 2036, 296, 93.10, 80.32, 87.89),
    ("[6 9 10]", 1257, 202, 1985, 247, 90.76, 83.58, 87.84),
    ("[7 9 10]", 1250, 197, 1990, 254, 90.99, 83.11, 87.78),
    ("[3 7 10]", 1204, 165, 2022, 300, 92.46, 80.05, 87.40),
    ("[3 6 10]", 1191, 154, 2033, 313, 92.96, 79.19, 87.35),
    ("[4 5 10]", 1202, 165, 2022, 302, 92.46, 79.92, 87.35),
    ("[4 8 10]", 1230, 196, 1991, 274, 91.04, 81.78, 87.27),
    ("[4 7 10]", 1211, 179, 2008, 293, 91.82, 80.52, 87.21),
    ("[5 8 10]", 1245, 218, 1969, 259, 90.03, 82.78, 87.08),
    ("[5 9 10]", 1255, 228, 1959, 249, 89.57, 83.44, 87.08),
    ("[8 9 10]", 1243, 216, 1971, 261, 90.12, 82.65, 87.08),
    ("[5 6 10]", 1215, 189, 1998, 289, 91.36, 80.78, 87.05),
    ("[3 5 10]", 1206, 183, 2004, 298, 91.63, 80.19, 86.97),
    ("[3 8 10]", 1197, 175, 2012, 307, 92.00, 79.59, 86.94),
    ("[3 9 10]", 1214, 193, 1994, 290, 91.18, 80.72, 86.91),
    ("[4 9 10]", 1243, 229, 1958, 261, 89.53, 82.65, 86.72),
    ("[5 7 10]", 1248, 234, 1953, 256, 89.30, 82.98, 86.72),
    ("[7 8 10]", 1237, 223, 1964, 267, 89.80, 82.25, 86.72),
    ("[6 7 10]", 1218, 216, 1971, 286, 90.12, 80.98, 86.40),
    # all nine channels
    ("[2 - 10]", 1269, 178, 2009, 235, 91.86, 84.38, 88.81),
]
