#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace wbmr {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;
using MatX2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// 6D rotation parameterization: the first two columns of a rotation matrix,
// stored column-major as (x0,x1,x2, y0,y1,y2).
using Rot6 = Vec6;

// Skeleton layout: 22 body joints (pelvis root), jaw, two eyes, and
// 15 joints per hand (5 fingers x 3 segments), 55 joints total.
inline constexpr int kNumJoints = 55;
inline constexpr int kNumBodyJoints = 22;
inline constexpr int kHandJointCount = 15;  // per hand
inline constexpr int kLeftHandStart = 25;
inline constexpr int kRightHandStart = 40;
inline constexpr int kNumShapeCoeffs = 10;
inline constexpr int kNumBones = kNumJoints - 1;
inline constexpr int kNumVertices = kNumJoints + kNumBones;  // joints + bone midpoints

// End effectors carrying contact probabilities, in label order:
// left ankle, right ankle, left toe, right toe, left wrist, right wrist.
inline constexpr int kNumContacts = 6;
inline constexpr std::array<int, kNumContacts> kContactJoints = {7, 8, 10, 11, 20, 21};

// 2D keypoint layouts. The body layout covers joints 0..24 (22 body joints
// plus jaw and both eyes used as head markers). Each hand contributes 21
// keypoints: wrist, then per finger base/mid/tip joints plus a distal marker
// halfway along the terminal segment.
inline constexpr int kBodyKeypoints = 25;
inline constexpr int kHandKeypoints = 21;

inline constexpr double kConfidenceThreshold = 0.55;
inline constexpr int kMinHandKeypoints = 5;
inline constexpr double kMinHandBoxPx = 20.0;

}  // namespace wbmr
